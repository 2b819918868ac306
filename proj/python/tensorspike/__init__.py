from tensorspike._core import *  # noqa: F401,F403
from tensorspike._core import __doc__  # noqa: F401
