#pragma once

#include <string>
#include <vector>

namespace perpo::cli {

/// Exit codes: 0 success, 1 usage error, 2 data/validation error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one CLI invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace perpo::cli
