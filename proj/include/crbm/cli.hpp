#pragma once

#include <iosfwd>

namespace crbm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Entry point of the `crbm` command-line tool.
/// Subcommands: make-dataset, train, predict, eval, bench-bp, oracle-check.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace crbm
