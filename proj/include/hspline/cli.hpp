#pragma once

#include <iosfwd>

namespace hspline {

/// Stable exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitNumerical = 2,
  kExitExpectedInstability = 3,
};

/// Entry point of the `hspline` tool: subcommands fit, interpolate and
/// experiment. Output that the shell would print goes to `out`/`err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hspline
