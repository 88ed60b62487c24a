#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hscls {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `hscls` command line (args excludes the program name). Output
/// goes to `out`; diagnostics, progress and the resolved seed go to `err`.
/// Returns 0 on success, 2 on a usage error and 1 on any runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hscls
