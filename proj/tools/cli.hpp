#pragma once

#include <iosfwd>

namespace voxelsr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // bad flags, config, paths or file formats
inline constexpr int kExitNumerical = 3;  // non-finite losses or predictions

/// Runs the `voxelsr` command line. Normal output goes to `out`, diagnostics
/// to `err`; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace voxelsr::cli
