// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gsvo {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitDiverged = 4,
  kExitTrackingLost = 5,
};

/// Runs one command line. `args` excludes the program name, e.g.
/// {"track", "--dataset", "seq", "--map", "map.ply", "--out", "traj.txt"}.
/// Diagnostics go to stderr; results that are meant to be piped go to stdout.
int run_cli(const std::vector<std::string>& args);

/// Every tunable key with its default value, as accepted by --config files
/// and recorded in run manifests.
std::map<std::string, std::string> default_settings();

}  // namespace gsvo
