#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prenet::cli {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kIo = 2,
  kFormat = 3,
  kNumerical = 4,
};

// Runs one invocation. `args` excludes the program name. Results go to
// `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prenet::cli
