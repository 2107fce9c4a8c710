#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rpbart::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kIngestion = 3, kRuntime = 4 };

/// Parses arguments and runs one subcommand; returns the process exit code.
/// Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rpbart::cli
