#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "posh/build_config.hpp"
#include "posh/config.hpp"

namespace posh::rte {

/// Everything needed to start one parallel job.
struct JobSpec {
  int npes = 1;
  std::vector<std::string> command;  // program followed by its arguments
  std::size_t heap_size = kDefaultHeapSize;
  std::string jobid;  // generated when empty
  bool capture_io = false;
  bool debug = kDebugMode;
  bool safe = kSafeMode;
  std::optional<int> debug_hold_rank;
  std::string coll_algo;
  /// Time between SIGTERM and SIGKILL when the job is torn down.
  std::chrono::milliseconds kill_grace{2000};
};

enum class ChildState { not_started, running, exited, signaled };

struct ChildRecord {
  int rank = 0;
  pid_t pid = -1;
  ChildState state = ChildState::not_started;
  int code = 0;  // exit status or signal number
};

struct JobResult {
  int exit_code = 0;  // 0 all PEs succeeded, 1 a PE failed, 2 launcher error
  std::string jobid;
  std::vector<ChildRecord> children;
  int first_failure = -1;  // rank whose failure tore the job down
  std::vector<int> relayed_signals;
};

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitChildFailure = 1;
inline constexpr int kExitLauncherError = 2;

/// Host-unique job identifier: launcher pid plus random bits, in hex.
std::string generate_jobid();

/// The POSH_* assignments ("NAME=value") handed to PE `rank`.
std::vector<std::string> child_environment(const JobSpec& spec, const std::string& jobid, int rank);

/// Spawns the job, forwards signals and (optionally) prefixed output, waits
/// for every PE and removes the job's heaps. A failing PE terminates the
/// others. Blocks the relayed signals in the calling thread while running.
JobResult launch(const JobSpec& spec);

/// One line per abnormal child, e.g. "rank 2 (pid 123) killed by SIGSEGV".
std::string describe_failures(const JobResult& result);

}  // namespace posh::rte
