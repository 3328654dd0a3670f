#pragma once

#include <ostream>

namespace cpcl {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitNumeric = 3,
  kExitVerification = 4,
};

/// Entry point of the `cpcl` command-line tool. Reports go to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpcl
