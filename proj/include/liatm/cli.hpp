#pragma once

// Command-line front end. `run_cli` takes the full argv (program name first)
// and returns the process exit code.

#include <iosfwd>
#include <string>
#include <vector>

namespace liatm::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kInputError = 2,
  kQaGateFailed = 3,
  kRemoteFailure = 4,
};

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace liatm::cli
