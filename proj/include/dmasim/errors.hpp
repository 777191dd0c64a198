#pragma once

#include <stdexcept>
#include <string>

namespace dmasim {

// Process exit codes used by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitModelError = 3,
  kExitSyncError = 4,
  kExitIoError = 5,
};

/// Invalid scenario/configuration input or a missing upstream artifact.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Physics model construction or evaluation failure.
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Frame synchronization failure (no credible correlation peak).
struct SyncError : std::runtime_error {
  SyncError(const std::string& what, double ratio)
      : std::runtime_error(what), peak_to_median(ratio) {}
  double peak_to_median;
};

/// File read/write failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dmasim
