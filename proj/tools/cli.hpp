#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tuckerpid::cli {

/// Exit codes of the `tpid` tool.
enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kDivergence = 4 };

/// Runs one `tpid` invocation; args[0] is the program name. Normal output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tuckerpid::cli
