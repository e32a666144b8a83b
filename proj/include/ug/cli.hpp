#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ug {

enum ExitCode : int { exit_ok = 0, exit_invalid = 1, exit_runtime = 2, exit_usage = 64 };

/// Runs one `ug` command. `args` excludes the program name. Data goes to
/// `out`, diagnostics to `err`; `in` feeds the repl.
int execute(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace ug
