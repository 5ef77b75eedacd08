#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace polypeval {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNetwork = 3;
inline constexpr int kExitVerification = 4;

/// Entry point of the command-line tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace polypeval
