#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace consplat {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRemote = 3 };

// Runs one command line (argv[0] is the program name). Normal output goes to `out`,
// usage text and diagnostics to `err`.
int cli_dispatch(const std::vector<std::string> &argv, std::ostream &out, std::ostream &err);
int cli_dispatch(int argc, char **argv);

} // namespace consplat
