#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prose::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitModuleError = 1;
inline constexpr int kExitUsage = 2;

// Runs one `prose` subcommand. Diagnostics go to `err`, human-readable
// output (inspect, summaries) to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prose::cli
