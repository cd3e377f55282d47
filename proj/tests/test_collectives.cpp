#include <chrono>
#include <cstring>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "posh/build_config.hpp"
#include "posh/descriptor.hpp"
#include "posh/posh.hpp"
#include "support/pe_harness.hpp"

using namespace posh;
using posh::test::all_equal;
using posh::test::describe;
using posh::test::JobOptions;
using posh::test::run_pes;

namespace {

void sleep_ms(int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }

// Checked by each PE right after a collective returns. Peers may already be
// in the next one, so only the local descriptor is stable here.
bool descriptor_reset(Heap& heap) { return snapshot(heap.local().descriptor(), heap.rank()).is_reset(); }

JobOptions with_algo(const char* algo) {
  JobOptions opts;
  opts.coll_algo = algo;
  return opts;
}

}  // namespace

TEST_CASE("collectives on a single PE") {
  RuntimeConfig cfg;
  cfg.jobid = posh::test::fresh_jobid();
  cfg.heap_size = std::size_t{1} << 20;
  Runtime rt(cfg);
  const SymAddr src = rt.heap().shmalloc(4 * sizeof(int));
  const SymAddr dst = rt.heap().shmalloc(4 * sizeof(int));
  auto* s = rt.heap().translate_as<int>(src, 0);
  for (int i = 0; i < 4; ++i) s[i] = i * 3;
  rt.coll().broadcast(0, src, 16);
  rt.coll().reduce<int>(ReduceOp::sum, src, dst, 4);
  CHECK(std::memcmp(s, rt.heap().translate_as<int>(dst, 0), 16) == 0);
  CHECK(rt.coll().stats().instances == 0);
}

TEST_CASE("algorithm names and build defaults") {
  CHECK(to_string(BcastAlgo::linear_put) == "linear-put");
  CHECK(to_string(ReduceAlgo::recursive_doubling) == "recursive-doubling");
  CHECK(to_string(ReduceOp::max) == "max");
  RuntimeConfig cfg;
  cfg.jobid = posh::test::fresh_jobid();
  cfg.heap_size = std::size_t{1} << 20;
  Heap heap(cfg);
  Collectives coll(heap);
  CHECK(coll.bcast_algo() == default_bcast_algo());
  CHECK(coll.reduce_algo() == default_reduce_algo());
}

TEST_CASE("unknown algorithm names in the configuration are rejected") {
  RuntimeConfig cfg;
  cfg.jobid = posh::test::fresh_jobid();
  cfg.heap_size = std::size_t{1} << 20;
  cfg.coll_algo = "linear-put,butterfly";
  Heap heap(cfg);
  CHECK_THROWS_AS(Collectives{heap}, Error);
}

TEST_CASE("broadcast of 1 KiB from PE 0 with late receivers") {
  for (const char* algo : {"linear-put", "binomial-tree"}) {
    const auto results = run_pes(4, [](const RuntimeConfig& cfg) {
      Runtime rt(cfg);
      const SymAddr buf = rt.heap().shmalloc(1024);
      auto* p = rt.heap().translate_as<unsigned char>(buf, cfg.rank);
      std::mt19937 rng(42);
      std::vector<unsigned char> expected(1024);
      for (auto& b : expected) b = static_cast<unsigned char>(rng());
      if (cfg.rank == 0) std::memcpy(p, expected.data(), 1024);
      if (cfg.rank != 0) sleep_ms(30 * cfg.rank);
      rt.coll().broadcast(0, buf, 1024);
      const bool equal = std::memcmp(p, expected.data(), 1024) == 0;
      return std::string(equal ? "equal" : "differs") + (descriptor_reset(rt.heap()) ? " reset" : " dirty");
    }, with_algo(algo));
    CHECK_MESSAGE(all_equal(results, "equal reset"), algo << "\n" << describe(results));
  }
}

TEST_CASE("broadcast from every root, every algorithm, 1 to 8 PEs") {
  for (const char* algo : {"linear-put", "binomial-tree"}) {
    for (int n = 1; n <= 8; ++n) {
      const auto results = run_pes(n, [](const RuntimeConfig& cfg) {
        Runtime rt(cfg);
        const SymAddr buf = rt.heap().shmalloc(64);
        auto* p = rt.heap().translate_as<int>(buf, cfg.rank);
        std::string out;
        for (int root = 0; root < cfg.npes; ++root) {
          for (int i = 0; i < 16; ++i) p[i] = cfg.rank == root ? root * 100 + i : -1;
          rt.coll().broadcast(root, buf, 64);
          bool ok = true;
          for (int i = 0; i < 16; ++i) ok = ok && p[i] == root * 100 + i;
          out += ok ? "+" : "-";
        }
        return out;
      }, with_algo(algo));
      CHECK_MESSAGE(all_equal(results, std::string(static_cast<std::size_t>(n), '+')), algo << " n=" << n << "\n"
                                                                                            << describe(results));
    }
  }
}

TEST_CASE("reduce sum of ranks equals n(n-1)/2 for both algorithms and 1 to 8 PEs") {
  for (const char* algo : {"linear-gather", "recursive-doubling"}) {
    for (int n = 1; n <= 8; ++n) {
      const auto results = run_pes(n, [](const RuntimeConfig& cfg) {
        Runtime rt(cfg);
        const SymAddr src = rt.heap().shmalloc(100 * sizeof(long));
        const SymAddr dst = rt.heap().shmalloc(100 * sizeof(long));
        auto* s = rt.heap().translate_as<long>(src, cfg.rank);
        for (int i = 0; i < 100; ++i) s[i] = cfg.rank + i;
        rt.coll().reduce<long>(ReduceOp::sum, src, dst, 100);
        const auto* d = rt.heap().translate_as<long>(dst, cfg.rank);
        const long n = cfg.npes;
        for (int i = 0; i < 100; ++i) {
          if (d[i] != n * (n - 1) / 2 + n * i) return "wrong at " + std::to_string(i) + ": " + std::to_string(d[i]);
        }
        return std::string("ok");
      }, with_algo(algo));
      CHECK_MESSAGE(all_equal(results, "ok"), algo << " n=" << n << "\n" << describe(results));
    }
  }
}

TEST_CASE("min, max and idempotence") {
  for (const char* algo : {"linear-gather", "recursive-doubling"}) {
    const auto results = run_pes(5, [](const RuntimeConfig& cfg) {
      Runtime rt(cfg);
      const SymAddr src = rt.heap().shmalloc(3 * sizeof(int));
      const SymAddr dst = rt.heap().shmalloc(3 * sizeof(int));
      auto* s = rt.heap().translate_as<int>(src, cfg.rank);
      const auto* d = rt.heap().translate_as<int>(dst, cfg.rank);
      s[0] = 10 - cfg.rank;
      s[1] = cfg.rank * cfg.rank - 3;
      s[2] = 7;
      std::string out;
      rt.coll().reduce<int>(ReduceOp::min, src, dst, 3);
      out += std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + " ";
      rt.coll().reduce<int>(ReduceOp::max, src, dst, 3);
      out += std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]);
      return out;
    }, with_algo(algo));
    CHECK_MESSAGE(all_equal(results, "6,-3,7 10,13,7"), algo << "\n" << describe(results));
  }
}

TEST_CASE("reductions larger than the staging region, in place and out of place") {
  for (const char* algo : {"linear-gather", "recursive-doubling"}) {
    const auto results = run_pes(6, [](const RuntimeConfig& cfg) {
      Runtime rt(cfg);
      const std::size_t n = 300'000;
      const SymAddr a = rt.heap().shmalloc(n * sizeof(std::uint64_t));
      const SymAddr b = rt.heap().shmalloc(n * sizeof(std::uint64_t));
      auto* pa = rt.heap().translate_as<std::uint64_t>(a, cfg.rank);
      const auto* pb = rt.heap().translate_as<std::uint64_t>(b, cfg.rank);
      for (std::size_t i = 0; i < n; ++i) pa[i] = i * 6 + static_cast<std::uint64_t>(cfg.rank);
      rt.coll().reduce<std::uint64_t>(ReduceOp::sum, a, b, n);
      rt.coll().reduce<std::uint64_t>(ReduceOp::max, a, a, n);
      for (std::size_t i = 0; i < n; ++i) {
        if (pb[i] != i * 36 + 15) return "sum wrong at " + std::to_string(i);
        if (pa[i] != i * 6 + 5) return "max wrong at " + std::to_string(i);
      }
      return std::string(rt.coll().staging_watermark(cfg.rank) == 0 ? "ok" : "staging leaked");
    }, [&] {
      JobOptions o = with_algo(algo);
      o.heap_size = std::size_t{16} << 20;
      return o;
    }());
    CHECK_MESSAGE(all_equal(results, "ok"), algo << "\n" << describe(results));
  }
}

TEST_CASE("a receiver that entered first gets the data written directly") {
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr buf = rt.heap().shmalloc(256);
    auto* p = rt.heap().translate_as<unsigned char>(buf, cfg.rank);
    std::memset(p, cfg.rank == 0 ? 0x33 : 0, 256);
    if (cfg.rank == 0) sleep_ms(150);
    rt.coll().broadcast(0, buf, 256);
    const auto& st = rt.coll().stats();
    std::string out = p[255] == 0x33 ? "data" : "nodata";
    if (cfg.rank == 0) out += " direct=" + std::to_string(st.direct_deliveries) + " deposits=" + std::to_string(st.handle_deposits);
    if (cfg.rank == 1) out += " consumed=" + std::to_string(st.handles_consumed) + " early=" + std::to_string(st.early_arrivals);
    return out;
  });
  CHECK_MESSAGE(results[0].output == "data direct=1 deposits=0", describe(results));
  CHECK_MESSAGE(results[1].output == "data consumed=0 early=0", describe(results));
}

TEST_CASE("a pusher that arrives before its target leaves a handle the target pulls on entry") {
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr buf = rt.heap().shmalloc(256);
    auto* p = rt.heap().translate_as<unsigned char>(buf, cfg.rank);
    std::memset(p, cfg.rank == 0 ? 0x44 : 0, 256);
    std::string out;
    if (cfg.rank == 1) {
      sleep_ms(150);
      // PE 0 is inside the broadcast by now and has initialized our
      // descriptor on our behalf.
      const auto before = snapshot(rt.heap().local().descriptor(), cfg.rank);
      out += before.in_progress && before.ctype == CollType::broadcast && !before.entered ? "preinit " : "noinit ";
    }
    rt.coll().broadcast(0, buf, 256);
    const auto& st = rt.coll().stats();
    out += p[128] == 0x44 ? "data" : "nodata";
    if (cfg.rank == 0) out += " remote_inits=" + std::to_string(st.remote_inits) + " deposits=" + std::to_string(st.handle_deposits);
    if (cfg.rank == 1) out += " consumed=" + std::to_string(st.handles_consumed) + " early=" + std::to_string(st.early_arrivals);
    return out;
  });
  CHECK_MESSAGE(results[0].output == "data remote_inits=1 deposits=1", describe(results));
  CHECK_MESSAGE(results[1].output == "preinit data consumed=1 early=1", describe(results));
}

TEST_CASE("late contributors to a linear-gather reduction are pulled and combined by the root") {
  const auto results = run_pes(4, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr src = rt.heap().shmalloc(sizeof(int) * 1000);
    const SymAddr dst = rt.heap().shmalloc(sizeof(int) * 1000);
    auto* s = rt.heap().translate_as<int>(src, cfg.rank);
    for (int i = 0; i < 1000; ++i) s[i] = (cfg.rank + 1) * i;
    if (cfg.rank != 0) sleep_ms(100);
    rt.coll().reduce<int>(ReduceOp::sum, src, dst, 1000);
    const auto* d = rt.heap().translate_as<int>(dst, cfg.rank);
    for (int i = 0; i < 1000; ++i) {
      if (d[i] != 10 * i) return std::string("wrong");
    }
    return std::string(cfg.rank == 0 ? "root" : "leaf") + " hw=" + std::to_string(rt.coll().stats().staging_high_water > 0);
  }, with_algo("linear-gather"));
  CHECK_MESSAGE(results[0].output == "root hw=0", describe(results));
  for (int r = 1; r < 4; ++r) CHECK_MESSAGE(results[static_cast<std::size_t>(r)].output == "leaf hw=0", describe(results));
}

TEST_CASE("early contributors deposit handles that the root combines through staging") {
  const auto results = run_pes(4, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr src = rt.heap().shmalloc(sizeof(int) * 1000);
    const SymAddr dst = rt.heap().shmalloc(sizeof(int) * 1000);
    auto* s = rt.heap().translate_as<int>(src, cfg.rank);
    for (int i = 0; i < 1000; ++i) s[i] = (cfg.rank + 1) * i;
    if (cfg.rank == 0) sleep_ms(150);
    rt.coll().reduce<int>(ReduceOp::sum, src, dst, 1000);
    const auto* d = rt.heap().translate_as<int>(dst, cfg.rank);
    for (int i = 0; i < 1000; ++i) {
      if (d[i] != 10 * i) return std::string("wrong");
    }
    const auto& st = rt.coll().stats();
    if (cfg.rank == 0) {
      return "consumed=" + std::to_string(st.handles_consumed) + " staged=" + std::to_string(st.staging_high_water > 0) +
             " watermark=" + std::to_string(rt.coll().staging_watermark(0));
    }
    return "deposits=" + std::to_string(st.handle_deposits);
  }, with_algo("linear-gather"));
  CHECK_MESSAGE(results[0].output == "consumed=3 staged=1 watermark=0", describe(results));
  for (int r = 1; r < 4; ++r) CHECK_MESSAGE(results[static_cast<std::size_t>(r)].output == "deposits=1", describe(results));
}

TEST_CASE("simultaneous entry under contention initializes each descriptor exactly once") {
  for (const char* algo : {"binomial-tree,linear-gather", "linear-put,recursive-doubling"}) {
    const auto results = run_pes(8, [](const RuntimeConfig& cfg) {
      Runtime rt(cfg);
      const SymAddr buf = rt.heap().shmalloc(64);
      const SymAddr out = rt.heap().shmalloc(64);
      auto* p = rt.heap().translate_as<std::int64_t>(buf, cfg.rank);
      for (int iter = 0; iter < 300; ++iter) {
        for (int i = 0; i < 8; ++i) p[i] = iter + cfg.rank;
        if (iter % 2 == 0) {
          rt.coll().broadcast(iter % cfg.npes, buf, 64);
        } else {
          rt.coll().reduce<std::int64_t>(ReduceOp::sum, buf, out, 8);
        }
      }
      const auto& st = rt.coll().stats();
      return "multi_init=" + std::to_string(st.multi_init) + " instances=" + std::to_string(st.instances);
    }, with_algo(algo));
    CHECK_MESSAGE(all_equal(results, results[0].output), describe(results));
    CHECK_MESSAGE(results[0].output.starts_with("multi_init=0 "), describe(results));
  }
}

TEST_CASE("descriptors are reset and allocator states stay equal after collectives with early arrivals") {
  const auto results = run_pes(4, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr buf = rt.heap().shmalloc(4096);
    const SymAddr out = rt.heap().shmalloc(4096);
    std::string log;
    std::mt19937 rng(5);
    for (int iter = 0; iter < 20; ++iter) {
      const int late = static_cast<int>(rng() % 4);
      if (cfg.rank == late) sleep_ms(20);
      rt.coll().broadcast(iter % 4, buf, 4096);
      bool equal = descriptor_reset(rt.heap());
      if (cfg.rank == (late + 1) % 4) sleep_ms(20);
      rt.coll().reduce<int>(ReduceOp::max, buf, out, 1024);
      equal = equal && descriptor_reset(rt.heap());
      rt.barrier();
      for (int pe = 0; pe < cfg.npes; ++pe) {
        equal = equal && rt.heap().allocator_state_hash(pe) == rt.heap().allocator_state_hash(cfg.rank);
        equal = equal && rt.coll().staging_watermark(pe) == 0;
      }
      log += equal ? "." : "x";
      rt.barrier();
    }
    return log;
  });
  CHECK_MESSAGE(all_equal(results, std::string(20, '.')), describe(results));
}

TEST_CASE("temporary allocation outside a collective is an error") {
  RuntimeConfig cfg;
  cfg.jobid = posh::test::fresh_jobid();
  cfg.heap_size = std::size_t{1} << 20;
  Runtime rt(cfg);
  try {
    rt.coll().temp_alloc(64);
    FAIL("expected not_in_collective");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_in_collective);
  }
}

TEST_CASE("a reduction that needs staging fails cleanly when there is none") {
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr a = rt.heap().shmalloc(64);
    rt.coll().reduce<int>(ReduceOp::sum, a, a, 16);
    return std::string("reduced");
  }, [] {
    JobOptions o = with_algo("recursive-doubling");
    o.staging_size = 0;
    return o;
  }());
  for (const auto& r : results) CHECK_MESSAGE(r.output.starts_with("error:staging_exhausted"), describe(results));
}

TEST_CASE("broadcast on one PE meeting reduce on another is reported as a type mismatch") {
  if constexpr (!kSafeMode) return;
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr a = rt.heap().shmalloc(64);
    const SymAddr b = rt.heap().shmalloc(64);
    if (cfg.rank == 0) {
      rt.coll().reduce<int>(ReduceOp::sum, a, b, 16);
    } else {
      rt.coll().broadcast(0, a, 64);
    }
    return std::string("completed");
  }, {.timeout = std::chrono::seconds(20)});
  for (const auto& r : results) CHECK_MESSAGE(r.output.starts_with("error:collective_type_mismatch"), describe(results));
}

TEST_CASE("broadcasts of different sizes are reported as a size mismatch") {
  if constexpr (!kSafeMode) return;
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr a = rt.heap().shmalloc(64);
    rt.coll().broadcast(0, a, cfg.rank == 0 ? 64 : 32);
    return std::string("completed");
  }, {.timeout = std::chrono::seconds(20)});
  for (const auto& r : results) CHECK_MESSAGE(r.output.starts_with("error:collective_size_mismatch"), describe(results));
}

TEST_CASE("barrier: staggered entry, nobody leaves before the last arrives") {
  const auto results = run_pes(4, [](const RuntimeConfig& cfg) {
    Runtime rt(cfg);
    const SymAddr stamps = rt.heap().shmalloc(8 * sizeof(std::int64_t));
    auto* on_pe0 = rt.heap().translate_as<std::int64_t>(stamps, 0);
    const auto now = [] { return std::chrono::steady_clock::now().time_since_epoch().count(); };
    sleep_ms(50 * cfg.rank);
    on_pe0[2 * cfg.rank] = now();
    rt.barrier();
    on_pe0[2 * cfg.rank + 1] = now();
    rt.barrier();
    std::int64_t max_entry = 0;
    std::int64_t min_exit = INT64_MAX;
    for (int r = 0; r < cfg.npes; ++r) {
      max_entry = std::max(max_entry, on_pe0[2 * r]);
      min_exit = std::min(min_exit, on_pe0[2 * r + 1]);
    }
    return std::string(min_exit >= max_entry ? "ordered" : "violated");
  });
  CHECK_MESSAGE(all_equal(results, "ordered"), describe(results));
}
