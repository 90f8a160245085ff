#pragma once

// Command-line surface.
//
//   qflow <flow|solve|continuation|analyze|bubble|green> [--config FILE] [--set key=value]...
//   qflow selftest
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
// (the failure class is named on standard error).

#include <iosfwd>
#include <string>
#include <vector>

namespace qflow {

inline constexpr int exit_success = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_numerical = 2;

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Quick invariant suite on small grids. Returns the number of failed checks.
int run_selftest(std::ostream& out);

}  // namespace qflow
