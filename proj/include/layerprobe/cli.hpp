#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace layerprobe::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kValidationFailure = 2,
  kRuntimeError = 3,
};

/// Entry point. Reports go to --out, or `out` when --out is absent;
/// diagnostics and key=value progress lines go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace layerprobe::cli
