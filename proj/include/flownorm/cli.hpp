#pragma once

#include <string>
#include <vector>

#include "flownorm/bench.hpp"

namespace flownorm {

// Exit codes are part of the interface: 0 success, 1 non-convergence,
// 2 input error, 3 internal error.
enum ExitCode : int {
  kExitSuccess = 0,
  kExitNonConvergence = 1,
  kExitInputError = 2,
  kExitInternalError = 3,
};

int exit_code_for(ErrorKind kind);

int cli_main(int argc, const char* const* argv);

// Benchmark spec files (JSON); shared by the CLI and the test suites.
struct BasinSpecFile {
  BasinTrialSpec base;
  std::vector<SweepPoint> magnitudes;  // >= 1 entries; 1 means a plain run
};

BasinSpecFile load_basin_spec(const std::string& path);
SkipTrialSpec load_skip_spec(const std::string& path);

}  // namespace flownorm
