#ifndef MAFN_CLI_HPP
#define MAFN_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace mafn {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

/// Entry point of the `mafn` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace mafn

#endif  // MAFN_CLI_HPP
