#pragma once

#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace grunt {

/// Flat key=value document. Blank lines and lines starting with '#' are
/// ignored; keys are option names without the leading dashes. Throws
/// FormatError on a line without '=' or a repeated key.
std::map<std::string, std::string> parse_config_text(std::string_view text);

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitUsage = 2, kExitLeakage = 3 };

/// Runs the `grunt` command line (args[0] is the program name). Results go
/// to `out`, logs and diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grunt
