#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace smoothcert::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kOracleFailure = 3,
    kInfeasible = 4,
};

/// Runs one invocation. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smoothcert::cli
