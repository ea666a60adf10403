#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace harmony {

/// Exit codes of the command-line tool.
enum ExitCode : int { ExitOk = 0, ExitUsage = 1, ExitConfig = 2, ExitData = 3, ExitNumerical = 4 };

/// Entry point shared by the executable and the tests. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace harmony
