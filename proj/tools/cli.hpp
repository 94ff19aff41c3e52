#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avpr::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
int run_cli(int argc, char** argv);

/// Same as run_cli with explicit arguments (without the program name) and
/// output streams.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace avpr::cli
