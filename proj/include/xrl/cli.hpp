#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xrl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or data failure
inline constexpr int kExitUsage = 2;    // bad flags, missing prerequisite stage

// Runs one xrlprobe invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xrl
