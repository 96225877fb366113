#pragma once

#include <ostream>

namespace protofuse {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // a check ran and failed (check-grad)
  kExitUsage = 2,
  kExitConfig = 3,
  kExitData = 4,
  kExitEnvironment = 5,
  kExitContract = 6,
};

/// Subcommands: gen-synth, train, eval, ablate, check-grad.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace protofuse
