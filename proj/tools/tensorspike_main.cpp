#include "tensorspike/cli.hpp"

int main(int argc, char** argv) { return tensorspike::run_cli(argc, argv); }
