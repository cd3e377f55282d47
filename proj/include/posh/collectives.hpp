#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "posh/heap.hpp"
#include "posh/sym_addr.hpp"

namespace posh {

enum class ReduceOp : std::uint32_t { sum = 1, min = 2, max = 3 };
enum class BcastAlgo : std::uint32_t { linear_put = 1, binomial_tree = 2 };
enum class ReduceAlgo : std::uint32_t { linear_gather = 1, recursive_doubling = 2 };

std::string_view to_string(ReduceOp op) noexcept;
std::string_view to_string(BcastAlgo algo) noexcept;
std::string_view to_string(ReduceAlgo algo) noexcept;

/// Algorithms compiled in as defaults.
BcastAlgo default_bcast_algo() noexcept;
ReduceAlgo default_reduce_algo() noexcept;

/// Counters of this PE's participation in descriptor-based collectives.
struct CollectiveStats {
  std::uint64_t instances = 0;          // descriptor instances entered
  std::uint64_t early_arrivals = 0;     // entered a descriptor a peer had already initialized
  std::uint64_t remote_inits = 0;       // initialized a peer's descriptor before it entered
  std::uint64_t direct_deliveries = 0;  // wrote straight into a peer's landing buffer
  std::uint64_t handle_deposits = 0;    // left only a handle with a peer
  std::uint64_t handles_consumed = 0;   // pulled data a peer had left a handle to
  std::uint64_t multi_init = 0;         // instances whose descriptor was initialized more than once
  std::uint64_t staging_high_water = 0;
};

/// Element-wise combine of `n` bytes of `in` into `acc`.
using Combiner = void (*)(std::byte* acc, const std::byte* in, std::size_t nbytes);

struct ElemInfo {
  std::size_t size;
  std::uint32_t type_id;
};

namespace detail {

template <class T, ReduceOp Op>
void combine(std::byte* acc, const std::byte* in, std::size_t nbytes) {
  const std::size_t n = nbytes / sizeof(T);
  for (std::size_t i = 0; i < n; ++i) {
    T a;
    T b;
    std::memcpy(&a, acc + i * sizeof(T), sizeof(T));
    std::memcpy(&b, in + i * sizeof(T), sizeof(T));
    if constexpr (Op == ReduceOp::sum) {
      a = static_cast<T>(a + b);
    } else if constexpr (Op == ReduceOp::min) {
      a = b < a ? b : a;
    } else {
      a = a < b ? b : a;
    }
    std::memcpy(acc + i * sizeof(T), &a, sizeof(T));
  }
}

template <class T>
Combiner combiner_for(ReduceOp op) {
  switch (op) {
    case ReduceOp::min: return &combine<T, ReduceOp::min>;
    case ReduceOp::max: return &combine<T, ReduceOp::max>;
    case ReduceOp::sum: break;
  }
  return &combine<T, ReduceOp::sum>;
}

template <class T>
constexpr std::uint32_t type_id() {
  return static_cast<std::uint32_t>(sizeof(T)) | (std::is_floating_point_v<T> ? 0x100u : 0u) |
         (std::is_signed_v<T> ? 0x200u : 0u);
}

}  // namespace detail

/// Barrier, broadcast and reduction over all PEs, progressing through the
/// per-PE collective descriptors. A PE may be reached by its peers before it
/// calls the operation; they then initialize its descriptor and leave
/// handles to their data, which it pulls when it enters.
class Collectives {
 public:
  /// Uses the compiled-in algorithms unless the job's configuration names
  /// others ("linear-put", "binomial-tree", "linear-gather",
  /// "recursive-doubling", comma separated).
  explicit Collectives(Heap& heap);

  void barrier() { heap_.barrier_all(); }

  /// Copies root's `nbytes` at `data` into `data` on every PE.
  void broadcast(int root, SymAddr data, std::size_t nbytes);

  /// dst[i] = op over all PEs of src[i], on every PE.
  template <class T>
    requires std::is_arithmetic_v<T>
  void reduce(ReduceOp op, SymAddr src, SymAddr dst, std::size_t nelems) {
    reduce_erased(op, ElemInfo{sizeof(T), detail::type_id<T>()}, detail::combiner_for<T>(op), src, dst, nelems);
  }

  void reduce_erased(ReduceOp op, ElemInfo elem, Combiner combiner, SymAddr src, SymAddr dst, std::size_t nelems);

  BcastAlgo bcast_algo() const { return bcast_algo_; }
  ReduceAlgo reduce_algo() const { return reduce_algo_; }
  void set_algorithms(BcastAlgo bcast, ReduceAlgo reduce);

  /// Temporary, non-symmetric storage in the local staging region. Only
  /// valid inside a collective and released (last in, first out) before
  /// the collective returns, so the symmetric allocator never sees it.
  SymAddr temp_alloc(std::size_t nbytes);
  void temp_free(SymAddr addr);

  /// Bytes of `pe`'s staging region in use right now.
  std::uint64_t staging_watermark(int pe) const;

  const CollectiveStats& stats() const { return stats_; }
  Heap& heap() { return heap_; }

 private:
  class Instance;

  void bcast_linear(Instance& inst, int root, SymAddr data);
  void bcast_binomial(Instance& inst, int root, SymAddr data);
  void reduce_linear(ReduceOp op, ElemInfo elem, Combiner combiner, SymAddr src, SymAddr dst, std::size_t nbytes);
  void reduce_doubling(ReduceOp op, ElemInfo elem, Combiner combiner, SymAddr dst, std::size_t nbytes);

  Heap& heap_;
  BcastAlgo bcast_algo_;
  ReduceAlgo reduce_algo_;
  void (Collectives::*bcast_impl_)(Instance&, int, SymAddr) = nullptr;
  CollectiveStats stats_;
  bool in_collective_ = false;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> temps_;  // (offset, reserved bytes)
};

}  // namespace posh
