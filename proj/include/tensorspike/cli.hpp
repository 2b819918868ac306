#pragma once

namespace tensorspike {

// Entry point of the tensorspike command-line tool.
// Exit codes: 0 success, 2 usage error, 3 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace tensorspike
