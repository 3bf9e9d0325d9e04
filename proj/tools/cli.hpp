#ifndef MTLFSL_TOOLS_CLI_HPP
#define MTLFSL_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace mtlfsl::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kOk = 0,
    kInternalError = 1,
    kBadInput = 2,
    kNotConverged = 3,
};

/// Entry point behind the `mtlfsl` binary. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtlfsl::cli

#endif
