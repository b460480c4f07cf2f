#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace probpose::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one subcommand. `args` excludes the program name. Results go to `out`,
/// diagnostics to `err`. Returns 0 on success, 1 on usage errors and 2 on
/// data errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace probpose::cli
