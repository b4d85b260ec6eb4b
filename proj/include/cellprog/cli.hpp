#pragma once

#include <iosfwd>

namespace cellprog {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the cellprog command line tool. Subcommands: validate,
/// featurize, train, forecast, evaluate, run, plot-data.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cellprog
