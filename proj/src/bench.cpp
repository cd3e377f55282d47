#include "posh/bench.hpp"

#include <time.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "posh/datamover.hpp"
#include "posh/error.hpp"
#include "posh/heap.hpp"

namespace posh::bench {

namespace {

inline void clobber() { asm volatile("" ::: "memory"); }

struct FreeDeleter {
  void operator()(std::byte* p) const noexcept { std::free(p); }
};
using Buffer = std::unique_ptr<std::byte, FreeDeleter>;

Buffer make_buffer(std::size_t n, int fill) {
  const std::size_t size = std::max<std::size_t>(64, (n + 63) / 64 * 64);
  auto* p = static_cast<std::byte*>(std::aligned_alloc(64, size));
  if (p == nullptr) throw Error(ErrorCode::out_of_memory, "benchmark buffer");
  std::memset(p, fill, size);  // fault the pages in before timing
  return Buffer(p);
}

std::size_t max_size(const std::vector<std::size_t>& sizes) {
  return sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
}

// Runs warm-up plus timed repetitions of `op` and appends one record per rep.
template <class Op>
void measure(std::vector<BenchRecord>& out, Kind kind, copy::Strategy s, std::size_t nbytes, const SuiteOptions& opts,
             Op&& op) {
  const int ops = ops_per_rep(nbytes);
  for (int w = 0; w < opts.warmup; ++w) {
    for (int i = 0; i < ops; ++i) {
      op();
      clobber();
    }
  }
  for (int rep = 0; rep < opts.reps; ++rep) {
    const std::uint64_t start = now_ns();
    for (int i = 0; i < ops; ++i) {
      op();
      clobber();
    }
    const std::uint64_t stop = now_ns();
    out.push_back(make_record(kind, s, nbytes, rep, stop - start, ops));
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find(sep, start)) != std::string::npos; start = pos + 1) {
    fields.push_back(line.substr(start, pos - start));
  }
  fields.push_back(line.substr(start));
  return fields;
}

template <class T>
T parse_number(const std::string& text, std::size_t line_no) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::invalid_argument, fmt::format("line {}: bad number '{}'", line_no, text));
  }
  return value;
}

std::string size_label(std::size_t n) {
  if (n >= (std::size_t{1} << 20) && n % (std::size_t{1} << 20) == 0) return fmt::format("{} MiB", n >> 20);
  if (n >= (std::size_t{1} << 10) && n % (std::size_t{1} << 10) == 0) return fmt::format("{} KiB", n >> 10);
  return fmt::format("{} B", n);
}

}  // namespace

std::string_view to_string(Kind k) noexcept {
  switch (k) {
    case Kind::localcopy: return "localcopy";
    case Kind::put: return "put";
    case Kind::get: return "get";
  }
  return "?";
}

std::optional<Kind> parse_kind(std::string_view text) noexcept {
  if (text == "localcopy" || text == "copy") return Kind::localcopy;
  if (text == "put") return Kind::put;
  if (text == "get") return Kind::get;
  return std::nullopt;
}

std::uint64_t now_ns() {
  timespec ts;
  if (clock_gettime(CLOCK_MONOTONIC, &ts) != 0) throw_errno("clock_gettime(CLOCK_MONOTONIC)");
  return static_cast<std::uint64_t>(ts.tv_sec) * 1'000'000'000u + static_cast<std::uint64_t>(ts.tv_nsec);
}

int ops_per_rep(std::size_t nbytes) noexcept { return nbytes < kBandwidthThreshold ? kLoopCount : 1; }

BenchRecord make_record(Kind kind, copy::Strategy s, std::size_t nbytes, int rep, std::uint64_t total_ns, int ops) {
  BenchRecord r;
  r.kind = kind;
  r.strategy = std::string(copy::name(s));
  r.nbytes = nbytes;
  r.rep = rep;
  // A zero reading only means the clock did not tick; keep records positive.
  r.elapsed_ns = static_cast<double>(std::max<std::uint64_t>(total_ns, 1)) / ops;
  if (nbytes >= kBandwidthThreshold) r.bandwidth_gbps = static_cast<double>(nbytes) * 8.0 / r.elapsed_ns;
  return r;
}

std::vector<BenchRecord> run_localcopy(const SuiteOptions& opts) {
  std::vector<BenchRecord> records;
  const std::size_t cap = max_size(opts.sizes);
  auto src = make_buffer(cap, 0x5a);
  auto dst = make_buffer(cap, 0);
  for (copy::Strategy s : opts.strategies) {
    copy::dispatch(s, [&]<class Strategy>(Strategy) {
      for (std::size_t n : opts.sizes) {
        measure(records, Kind::localcopy, s, n, opts, [&] { Strategy::copy(dst.get(), src.get(), n); });
      }
    });
  }
  return records;
}

std::vector<BenchRecord> run_remote(Heap& heap, Kind kind, const SuiteOptions& opts) {
  if (heap.npes() < 2) throw Error(ErrorCode::invalid_argument, "put/get benchmarks need at least two PEs");
  if (kind == Kind::localcopy) throw Error(ErrorCode::invalid_argument, "run_remote measures put or get");
  std::vector<BenchRecord> records;
  const std::size_t cap = std::max<std::size_t>(max_size(opts.sizes), 64);
  const SymAddr remote = heap.shmemalign(64, cap);
  auto local = make_buffer(cap, 0x5a);
  std::memset(heap.translate(remote, heap.rank()), 0, cap);
  heap.barrier_all();
  for (copy::Strategy s : opts.strategies) {
    copy::dispatch(s, [&]<class Strategy>(Strategy) {
      for (std::size_t n : opts.sizes) {
        if (heap.rank() == 0) {
          if (kind == Kind::put) {
            measure(records, kind, s, n, opts, [&] { put<Strategy>(heap, 1, remote, local.get(), n); });
          } else {
            measure(records, kind, s, n, opts, [&] { get<Strategy>(heap, local.get(), 1, remote, n); });
          }
        }
        heap.barrier_all();
      }
    });
  }
  heap.shfree(remote);
  return records;
}

void emit_csv(const std::vector<BenchRecord>& records, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},", to_string(r.kind), r.strategy, r.nbytes, r.rep, r.elapsed_ns);
    if (r.bandwidth_gbps) out << fmt::format("{}", *r.bandwidth_gbps);
    out << '\n';
  }
}

void emit_csv(const std::vector<BenchRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path);
  emit_csv(records, out);
  if (!out) throw Error(ErrorCode::system, "write failed: " + path);
}

std::vector<BenchRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw Error(ErrorCode::invalid_argument, "missing or unexpected CSV header");
  }
  std::vector<BenchRecord> records;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw Error(ErrorCode::invalid_argument, fmt::format("line {}: expected 6 fields", line_no));
    BenchRecord r;
    const auto kind = parse_kind(f[0]);
    if (!kind || f[0] == "copy") throw Error(ErrorCode::invalid_argument, fmt::format("line {}: bad kind", line_no));
    r.kind = *kind;
    r.strategy = f[1];
    r.nbytes = parse_number<std::size_t>(f[2], line_no);
    r.rep = parse_number<int>(f[3], line_no);
    r.elapsed_ns = parse_number<double>(f[4], line_no);
    if (!f[5].empty()) r.bandwidth_gbps = parse_number<double>(f[5], line_no);
    records.push_back(std::move(r));
  }
  return records;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2;
}

std::vector<Summary> summarize(const std::vector<BenchRecord>& records) {
  using Key = std::tuple<Kind, std::string, std::size_t>;
  std::vector<Key> order;
  std::map<Key, std::vector<const BenchRecord*>> groups;
  for (const auto& r : records) {
    Key key{r.kind, r.strategy, r.nbytes};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<Summary> out;
  for (const auto& key : order) {
    const auto& group = groups[key];
    std::vector<double> ns, gbps;
    for (const auto* r : group) {
      ns.push_back(r->elapsed_ns);
      if (r->bandwidth_gbps) gbps.push_back(*r->bandwidth_gbps);
    }
    Summary s{std::get<0>(key), std::get<1>(key), std::get<2>(key), median(ns), *std::min_element(ns.begin(), ns.end()),
              std::nullopt};
    if (!gbps.empty()) s.median_gbps = median(gbps);
    out.push_back(std::move(s));
  }
  return out;
}

std::string emit_table(const std::vector<BenchRecord>& records) {
  const auto summaries = summarize(records);
  std::vector<std::string> strategies;
  using Row = std::pair<Kind, std::size_t>;
  std::vector<Row> rows;
  for (const auto& s : summaries) {
    if (std::find(strategies.begin(), strategies.end(), s.strategy) == strategies.end()) strategies.push_back(s.strategy);
    const Row row{s.kind, s.nbytes};
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
  }

  const auto find = [&](const Row& row, const std::string& strategy) -> const Summary* {
    for (const auto& s : summaries) {
      if (s.kind == row.first && s.nbytes == row.second && s.strategy == strategy) return &s;
    }
    return nullptr;
  };

  std::string text;
  const auto section = [&](const char* title, bool bandwidth) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& row : rows) {
      if ((row.second >= kBandwidthThreshold) != bandwidth) continue;
      std::vector<double> values;
      for (const auto& st : strategies) {
        const Summary* s = find(row, st);
        values.push_back(s == nullptr ? -1 : bandwidth ? s->median_gbps.value_or(-1) : s->median_ns);
      }
      // Best is the lowest latency or the highest bandwidth.
      int best = -1;
      for (int i = 0; i < static_cast<int>(values.size()); ++i) {
        if (values[i] < 0) continue;
        if (best < 0 || (bandwidth ? values[i] > values[best] : values[i] < values[best])) best = i;
      }
      std::vector<std::string> line{fmt::format("{} {}", to_string(row.first), size_label(row.second))};
      for (int i = 0; i < static_cast<int>(values.size()); ++i) {
        if (values[i] < 0) {
          line.push_back("-");
        } else {
          line.push_back(fmt::format("{:.2f}{}", values[i], i == best ? " *" : ""));
        }
      }
      cells.push_back(std::move(line));
    }
    if (cells.empty()) return;
    std::vector<std::string> header{""};
    header.insert(header.end(), strategies.begin(), strategies.end());
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& line : cells) {
      for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    }
    const auto render = [&](const std::vector<std::string>& line) {
      std::string out = fmt::format("{:<{}}", line[0], width[0]);
      for (std::size_t c = 1; c < line.size(); ++c) out += fmt::format(" | {:>{}}", line[c], width[c]);
      return out + "\n";
    };
    text += title;
    text += "\n";
    const std::string head = render(header);
    text += head;
    text += std::string(head.size() - 1, '-') + "\n";
    for (const auto& line : cells) text += render(line);
    text += "\n";
  };
  section("Latency (ns per operation, median)", false);
  section("Bandwidth (Gb/s, median)", true);
  return text;
}

}  // namespace posh::bench
