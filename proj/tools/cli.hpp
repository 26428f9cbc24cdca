#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ct::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;  // signature, policy, authentication, layout
inline constexpr int kExitUsage = 2;         // bad flags, IO, parse errors

/// Runs one command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ct::cli
