#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aerosdf::cli {

inline constexpr const char* kVersion = "1.0.0";

/// Runs the command line `args` (without the program name). Data goes to `out`,
/// progress and the single-line error message to `err`. Returns the exit code:
/// 0 on success, 1 on a failed run, 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// The --help text of the top-level command (empty name) or of a subcommand.
std::string help_text(const std::string& subcommand = "");

/// Names of all subcommands, in help order.
std::vector<std::string> subcommands();

}  // namespace aerosdf::cli
