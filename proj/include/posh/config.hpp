#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>

namespace posh {

// Environment contract between the launcher and each PE.
namespace env {
inline constexpr const char* kRank = "POSH_RANK";
inline constexpr const char* kNpes = "POSH_NPES";
inline constexpr const char* kJobId = "POSH_JOBID";
inline constexpr const char* kHeapSize = "POSH_HEAP_SIZE";
inline constexpr const char* kDebug = "POSH_DEBUG";
inline constexpr const char* kSafe = "POSH_SAFE";
inline constexpr const char* kDebugHoldRank = "POSH_DEBUG_HOLD_RANK";
inline constexpr const char* kCollAlgo = "POSH_COLL_ALGO";
}  // namespace env

inline constexpr std::size_t kDefaultHeapSize = std::size_t{64} << 20;
inline constexpr std::size_t kDefaultStagingSize = std::size_t{1} << 20;

/// Retry policy used while waiting for a remote heap to appear.
struct AttachPolicy {
  std::chrono::milliseconds initial{1};
  std::chrono::milliseconds cap{100};
  std::chrono::milliseconds timeout{10'000};
};

struct RuntimeConfig {
  int rank = 0;
  int npes = 1;
  std::string jobid;
  std::size_t heap_size = kDefaultHeapSize;
  std::size_t staging_size = kDefaultStagingSize;
  AttachPolicy attach;
  bool debug = false;
  bool safe = false;
  std::optional<int> debug_hold_rank;
  std::string coll_algo;

  /// Reads the POSH_* variables. A process started outside the launcher gets
  /// a single-PE configuration with a job id derived from its pid.
  static RuntimeConfig from_env();
};

/// Parses "64M", "1G", "4096", "16KiB". Throws Error(invalid_argument).
std::size_t parse_size(const std::string& text);

}  // namespace posh
