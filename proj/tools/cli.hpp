#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gridgp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable holding the default --jobs value for sweeps.
inline constexpr const char* kJobsEnv = "GRIDGP_JOBS";

/// Runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace gridgp::cli
