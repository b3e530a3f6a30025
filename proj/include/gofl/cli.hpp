#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gofl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command line (args[0] is the program name). Returns 0 on
/// success, 1 on usage errors and 2 on runtime or data errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gofl
