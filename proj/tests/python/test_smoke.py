import tensorspike

def test_import():
    assert hasattr(tensorspike, "__doc__")
