#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "posh/copy.hpp"

namespace posh {
class Heap;
}

namespace posh::bench {

enum class Kind { localcopy, put, get };

std::string_view to_string(Kind k) noexcept;
/// Accepts the CSV spelling and "copy" for localcopy.
std::optional<Kind> parse_kind(std::string_view text) noexcept;

/// Buffers below this size are timed as a loop of kLoopCount operations and
/// get no bandwidth figure.
inline constexpr std::size_t kBandwidthThreshold = std::size_t{64} << 10;
inline constexpr int kLoopCount = 1000;
inline constexpr int kDefaultReps = 20;

struct BenchRecord {
  Kind kind = Kind::localcopy;
  std::string strategy;
  std::size_t nbytes = 0;
  int rep = 0;
  double elapsed_ns = 0;  // per operation
  std::optional<double> bandwidth_gbps;

  bool operator==(const BenchRecord&) const = default;
};

struct SuiteOptions {
  std::vector<std::size_t> sizes;
  std::vector<copy::Strategy> strategies{copy::kAllStrategies.begin(), copy::kAllStrategies.end()};
  int reps = kDefaultReps;
  int warmup = 1;
};

/// CLOCK_MONOTONIC in nanoseconds. Throws if the clock cannot be read.
std::uint64_t now_ns();

/// Builds the record for one timed repetition covering `ops` operations.
BenchRecord make_record(Kind kind, copy::Strategy s, std::size_t nbytes, int rep, std::uint64_t total_ns, int ops);

/// Operations per timed repetition for a buffer size.
int ops_per_rep(std::size_t nbytes) noexcept;

/// Copies between two private buffers.
std::vector<BenchRecord> run_localcopy(const SuiteOptions& opts);

/// Collective over all PEs of `heap` (at least two): PE 0 puts to or gets
/// from PE 1's heap while the others wait at a barrier. Only PE 0 returns
/// records.
std::vector<BenchRecord> run_remote(Heap& heap, Kind kind, const SuiteOptions& opts);

inline constexpr std::string_view kCsvHeader = "kind,strategy,nbytes,rep,elapsed_ns,bandwidth_gbps";

void emit_csv(const std::vector<BenchRecord>& records, std::ostream& out);
void emit_csv(const std::vector<BenchRecord>& records, const std::string& path);
/// Throws Error(invalid_argument) on a bad header or malformed line.
std::vector<BenchRecord> parse_csv(std::istream& in);

double median(std::vector<double> values);

struct Summary {
  Kind kind;
  std::string strategy;
  std::size_t nbytes;
  double median_ns;
  double min_ns;
  std::optional<double> median_gbps;
};

/// One entry per (kind, strategy, nbytes), in first-seen order.
std::vector<Summary> summarize(const std::vector<BenchRecord>& records);

/// Two sub-tables, latency (ns) for small buffers and bandwidth (Gb/s) for
/// large ones. Rows are kind and size, columns are strategies, and the best
/// value of each row is starred.
std::string emit_table(const std::vector<BenchRecord>& records);

}  // namespace posh::bench
