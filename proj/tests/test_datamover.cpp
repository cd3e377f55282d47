#include <atomic>
#include <cfloat>
#include <climits>
#include <cstring>
#include <limits>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "posh/copy.hpp"
#include "posh/datamover.hpp"
#include "support/pe_harness.hpp"

using namespace posh;
using posh::test::all_equal;
using posh::test::describe;
using posh::test::run_pes;

namespace {

std::vector<unsigned char> random_bytes(std::size_t n, std::mt19937_64& rng) {
  std::vector<unsigned char> v(n);
  for (auto& b : v) b = static_cast<unsigned char>(rng());
  return v;
}

RuntimeConfig solo(std::size_t heap = std::size_t{64} << 20) {
  RuntimeConfig cfg;
  cfg.jobid = posh::test::fresh_jobid();
  cfg.heap_size = heap;
  return cfg;
}

template <class S>
void copy_matches_memcpy(std::size_t n, std::size_t src_off, std::size_t dst_off, std::mt19937_64& rng) {
  const auto src = random_bytes(n + 64, rng);
  std::vector<unsigned char> expected(n + 128, 0xAB);
  std::vector<unsigned char> got(n + 128, 0xAB);
  std::memcpy(expected.data() + dst_off, src.data() + src_off, n);
  S::copy(got.data() + dst_off, src.data() + src_off, n);
  REQUIRE(got == expected);
}

}  // namespace

TEST_CASE("strategy names round-trip through the parser") {
  for (const auto s : copy::kAllStrategies) CHECK(copy::parse_strategy(copy::name(s)) == s);
  CHECK_FALSE(copy::parse_strategy("mmx2"));
  CHECK(copy::name(copy::Strategy::system) == "default");
}

TEST_CASE_TEMPLATE("copy strategy matches memcpy, guard bytes included", S, copy::SystemCopy, copy::ByteLoopCopy,
                   copy::WideBlockCopy) {
  std::mt19937_64 rng(1);
  copy_matches_memcpy<S>(0, 0, 0, rng);
  copy_matches_memcpy<S>(1, 0, 0, rng);
  for (std::size_t off = 0; off < 64; ++off) copy_matches_memcpy<S>(1000, off, (off * 7) % 64, rng);
  for (std::size_t n = 1; n <= 300; ++n) copy_matches_memcpy<S>(n, n % 17, n % 13, rng);
  copy_matches_memcpy<S>(std::size_t{1} << 20, 3, 5, rng);
}

TEST_CASE("byteloop and wideblock agree on a random 1 MiB buffer") {
  std::mt19937_64 rng(2);
  const auto src = random_bytes(std::size_t{1} << 20, rng);
  std::vector<unsigned char> a(src.size());
  std::vector<unsigned char> b(src.size());
  copy::ByteLoopCopy::copy(a.data(), src.data(), src.size());
  copy::WideBlockCopy::copy(b.data(), src.data(), src.size());
  CHECK(a == b);
  CHECK(a == src);
}

TEST_CASE("self put then local read") {
  Heap heap(solo());
  const SymAddr a = heap.shmalloc(16);
  const char msg[] = "hello, symmetric";
  put(heap, 0, a, msg, 16);
  CHECK(std::memcmp(heap.local().base + a.offset(), msg, 16) == 0);
  char back[16];
  get(heap, back, 0, a, 16);
  CHECK(std::memcmp(back, msg, 16) == 0);
}

TEST_CASE("zero-length transfers are no-ops, even at invalid addresses") {
  Heap heap(solo());
  put(heap, 0, SymAddr(0), nullptr, 0);
  get(heap, nullptr, 0, SymAddr(0), 0);
}

TEST_CASE("out of bounds transfers are rejected") {
  if constexpr (!kSafeMode) return;
  Heap heap(solo(std::size_t{1} << 20));
  const SymAddr a = heap.shmalloc(64);
  char buf[128] = {};
  CHECK_THROWS_AS(get(heap, buf, 0, SymAddr(heap.local().capacity - 8), 16), Error);
  CHECK_THROWS_AS(put(heap, 0, SymAddr(8), buf, 8), Error);
  CHECK_THROWS_AS(put(heap, 1, a, buf, 8), Error);
}

TEST_CASE("misaligned element access is rejected") {
  if constexpr (!kSafeMode) return;
  Heap heap(solo());
  const SymAddr a = heap.shmalloc(64);
  try {
    put_elem<int>(heap, 0, a + 2, 1);
    FAIL("expected misaligned");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::misaligned);
  }
}

TEST_CASE("two PEs: put [1,2,3,4] then barrier, the target reads it") {
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Heap heap(cfg);
    const SymAddr a = heap.shmalloc(4);
    if (cfg.rank == 0) {
      const unsigned char data[4] = {1, 2, 3, 4};
      put(heap, 1, a, data, 4);
    }
    heap.barrier_all();
    const auto* p = reinterpret_cast<const unsigned char*>(heap.local().base + a.offset());
    std::string out;
    for (int i = 0; i < 4; ++i) out += std::to_string(p[i]);
    return cfg.rank == 1 ? out : std::string("1234");
  });
  CHECK_MESSAGE(all_equal(results, "1234"), describe(results));
}

TEST_CASE("get_elem of a value the owner set") {
  const auto results = run_pes(3, [](const RuntimeConfig& cfg) {
    Heap heap(cfg);
    const SymAddr a = heap.shmalloc(sizeof(int));
    *reinterpret_cast<int*>(heap.local().base + a.offset()) = 40 + cfg.rank;
    heap.barrier_all();
    std::string out;
    for (int pe = 0; pe < cfg.npes; ++pe) out += std::to_string(get_int(heap, pe, a)) + " ";
    return out;
  });
  CHECK_MESSAGE(all_equal(results, "40 41 42 "), describe(results));
}

TEST_CASE("all seven scalar entry points round-trip bit patterns, extremes included") {
  Heap heap(solo());
  const SymAddr a = heap.shmemalign(16, 16);
  std::mt19937_64 rng(3);

  put_short(heap, 0, a, SHRT_MIN);
  CHECK(get_short(heap, 0, a) == SHRT_MIN);
  put_int(heap, 0, a, INT_MAX);
  CHECK(get_int(heap, 0, a) == INT_MAX);
  put_long(heap, 0, a, LONG_MIN);
  CHECK(get_long(heap, 0, a) == LONG_MIN);
  put_longlong(heap, 0, a, LLONG_MAX);
  CHECK(get_longlong(heap, 0, a) == LLONG_MAX);
  put_float(heap, 0, a, FLT_MAX);
  CHECK(get_float(heap, 0, a) == FLT_MAX);
  put_double(heap, 0, a, DBL_MAX);
  CHECK(get_double(heap, 0, a) == DBL_MAX);
  put_longdouble(heap, 0, a, LDBL_MAX);
  CHECK(get_longdouble(heap, 0, a) == LDBL_MAX);

  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t bits = rng();
    double d;
    std::memcpy(&d, &bits, sizeof d);
    put_double(heap, 0, a, d);
    const double back = get_double(heap, 0, a);
    CHECK(std::memcmp(&back, &d, sizeof d) == 0);
    float f;
    const auto low = static_cast<std::uint32_t>(bits);
    std::memcpy(&f, &low, sizeof f);
    put_float(heap, 0, a, f);
    const float fb = get_float(heap, 0, a);
    CHECK(std::memcmp(&fb, &f, sizeof f) == 0);
    put_long(heap, 0, a, static_cast<long>(bits));
    CHECK(get_long(heap, 0, a) == static_cast<long>(bits));
    put_short(heap, 0, a, static_cast<short>(bits));
    CHECK(get_short(heap, 0, a) == static_cast<short>(bits));
  }
}

TEST_CASE("put/get round-trips are byte exact for every strategy, size and alignment") {
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Heap heap(cfg);
    const std::size_t max = std::size_t{16} << 20;
    const SymAddr area = heap.shmalloc(max + 64);
    std::vector<std::size_t> sizes;
    for (std::size_t n = 1; n <= 4096; n += (n < 256 ? 1 : 61)) sizes.push_back(n);
    for (std::size_t n = 8192; n <= max; n *= 2) sizes.push_back(n);
    std::mt19937_64 rng(11);
    std::string out = "ok";
    if (cfg.rank == 0) {
      for (const auto s : copy::kAllStrategies) {
        copy::dispatch(s, [&](auto impl) {
          using S = decltype(impl);
          for (const std::size_t n : sizes) {
            const std::size_t off = rng() % 64;
            const auto data = random_bytes(n, rng);
            std::vector<unsigned char> back(n);
            put<S>(heap, 1, area + off, data.data(), n);
            get<S>(heap, back.data(), 1, area + off, n);
            if (back != data) out = std::string("mismatch ") + std::string(S::name) + " " + std::to_string(n);
          }
        });
      }
    }
    heap.barrier_all();
    return out;
  }, {.heap_size = std::size_t{40} << 20});
  CHECK_MESSAGE(all_equal(results, "ok"), describe(results));
}

TEST_CASE("the target of a put does not take part in it") {
  const auto results = run_pes(2, [](const RuntimeConfig& cfg) {
    Heap heap(cfg);
    const SymAddr flag = heap.shmalloc(sizeof(int));
    const SymAddr data = heap.shmalloc(4096);
    heap.barrier_all();
    if (cfg.rank == 0) {
      std::vector<unsigned char> payload(4096, 0x5A);
      put(heap, 1, data, payload.data(), payload.size());
      const int one = 1;
      put(heap, 1, flag, &one, sizeof one);
      heap.barrier_all();
      return std::string("ok");
    }
    // Busy with unrelated work, never calling into the library, until the
    // data shows up.
    std::atomic_ref<int> seen(*reinterpret_cast<int*>(heap.local().base + flag.offset()));
    volatile std::uint64_t work = 0;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
    while (seen.load(std::memory_order_acquire) == 0 && std::chrono::steady_clock::now() < deadline) work = work + 1;
    const auto* p = reinterpret_cast<const unsigned char*>(heap.local().base + data.offset());
    bool intact = seen.load() == 1;
    for (int i = 0; i < 4096; ++i) intact = intact && p[i] == 0x5A;
    heap.barrier_all();
    return std::string(intact ? "ok" : "missing");
  });
  CHECK_MESSAGE(all_equal(results, "ok"), describe(results));
}
