#pragma once

#include <iosfwd>

namespace tpsf::cli {

/// Process exit statuses.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kBadConfig = 3,
  kMissingInput = 4,
};

/// Entry point behind the `tpsf` executable. Failures are reported as a single
/// line on `err`: error: code=N kind=<ErrorCode> msg="...".
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace tpsf::cli
