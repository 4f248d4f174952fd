#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace citerec::cli {

inline constexpr std::string_view kVersion = "0.1.0";

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name. Primary output goes to `out`;
/// diagnostics and logs go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace citerec::cli
