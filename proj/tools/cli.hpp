#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace grouprec::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs the `grouprec` command line. args[0] is the program name.
/// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grouprec::cli
