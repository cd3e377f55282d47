#include "posh/collectives.hpp"

#include <algorithm>
#include <string>

#include "posh/build_config.hpp"
#include "posh/copy.hpp"
#include "posh/descriptor.hpp"
#include "posh/error.hpp"
#include "posh/lock_word.hpp"
#include "posh/wait.hpp"

namespace posh {

namespace {

constexpr auto relaxed = std::memory_order_relaxed;
constexpr std::size_t kStagingAlign = 64;
constexpr std::size_t kCombineChunk = std::size_t{64} << 10;

enum class Mode { copy, combine };

std::uint64_t bcast_args(int root, BcastAlgo algo) {
  return static_cast<std::uint64_t>(root + 1) | (static_cast<std::uint64_t>(algo) << 32);
}

std::uint64_t reduce_args(ReduceOp op, ElemInfo elem, ReduceAlgo algo) {
  return static_cast<std::uint64_t>(op) | (static_cast<std::uint64_t>(elem.type_id) << 8) |
         (static_cast<std::uint64_t>(algo) << 32);
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  while (!text.empty()) {
    const std::size_t at = text.find(sep);
    const std::string_view part = text.substr(0, at);
    if (!part.empty()) parts.push_back(part);
    if (at == std::string_view::npos) break;
    text.remove_prefix(at + 1);
  }
  return parts;
}

}  // namespace

std::string_view to_string(ReduceOp op) noexcept {
  switch (op) {
    case ReduceOp::sum: return "sum";
    case ReduceOp::min: return "min";
    case ReduceOp::max: return "max";
  }
  return "unknown";
}

std::string_view to_string(BcastAlgo algo) noexcept {
  return algo == BcastAlgo::linear_put ? "linear-put" : "binomial-tree";
}

std::string_view to_string(ReduceAlgo algo) noexcept {
  return algo == ReduceAlgo::linear_gather ? "linear-gather" : "recursive-doubling";
}

BcastAlgo default_bcast_algo() noexcept {
#if defined(POSH_BCAST_LINEAR_PUT)
  return BcastAlgo::linear_put;
#else
  return BcastAlgo::binomial_tree;
#endif
}

ReduceAlgo default_reduce_algo() noexcept {
#if defined(POSH_REDUCE_RECURSIVE_DOUBLING)
  return ReduceAlgo::recursive_doubling;
#else
  return ReduceAlgo::linear_gather;
#endif
}

// One descriptor instance as seen by this PE: entry, transfers to and from
// peers, and the exit protocol.
class Collectives::Instance {
 public:
  Instance(Collectives& owner, CollType type, std::uint64_t size, std::uint64_t args)
      : owner_(owner),
        heap_(owner.heap_),
        rank_(heap_.rank()),
        seq_(heap_.next_collective_seq()),
        type_(type),
        size_(size),
        args_(args),
        desc_(heap_.local().descriptor()) {
    owner_.in_collective_ = true;
  }

  ~Instance() { owner_.in_collective_ = false; }

  Instance(const Instance&) = delete;
  Instance& operator=(const Instance&) = delete;

  std::uint64_t size() const { return size_; }
  std::byte* local(SymAddr addr) const { return heap_.local().base + addr.offset(); }

  void enter(SymAddr landing) {
    landing_ = landing;
    const bool early = enter_collective(desc_, rank_, seq_, type_, size_, args_, landing.offset());
    ++owner_.stats_.instances;
    if (early) ++owner_.stats_.early_arrivals;
  }

  // Transfers `size` bytes at `src` (local heap) to PE `to`'s slot `slot`:
  // copied to landing + slot * size, or combined into landing.
  void send(int to, int slot, SymAddr src, Mode mode, Combiner combiner = nullptr) {
    const HeapSegment& peer = heap_.rank_table()[static_cast<std::size_t>(to)];
    CollectiveDescriptor& d = peer.descriptor();
    wait_until([&] { return d.done_seq.load(std::memory_order_acquire) + 1 >= seq_; }, "peer leaving its previous collective",
               [&] { check(to); });
    const Arrival a = arrive(d, to, rank_, seq_, type_, size_, args_, slot, src.offset());
    if (a.initialized_remotely) ++owner_.stats_.remote_inits;
    if (a.direct) {
      if (mode == Mode::copy) {
        copy::Active::copy(peer.base + a.landing + static_cast<std::uint64_t>(slot) * size_, local(src), size_);
      } else {
        LockWordGuard guard(d.acc_lock, rank_);
        combiner(peer.base + a.landing, local(src), size_);
      }
      mark_delivered(d.slots[slot]);
      ++owner_.stats_.direct_deliveries;
    } else {
      ++deposits_;
      consumers_.push_back(to);
      ++owner_.stats_.handle_deposits;
    }
  }

  // Waits until slot `slot` is filled by PE `from` and completes a deposit
  // left as a handle.
  void receive(int slot, int from, Mode mode, Combiner combiner = nullptr) {
    DepositSlot& s = desc_.slots[slot];
    std::uint32_t state = 0;
    wait_until(
        [&] {
          state = s.state.load(std::memory_order_acquire);
          return state == static_cast<std::uint32_t>(SlotState::delivered) ||
                 state == static_cast<std::uint32_t>(SlotState::handle);
        },
        "collective data", [&] { check(from); });
    if (state == static_cast<std::uint32_t>(SlotState::handle)) consume(slot, s, mode, combiner);
  }

  // Every handle this PE left has been pulled; its source may change now.
  void wait_consumed() {
    wait_until([&] { return desc_.counter.load(std::memory_order_acquire) == deposits_; }, "peers reading our data",
               [&] {
                 for (const int pe : consumers_) check(pe);
               });
  }

  void finish() {
    wait_consumed();
    if (heap_.local().header().staging.top.load(relaxed) != 0) {
      throw Error(ErrorCode::collective_protocol, "staging memory still allocated when leaving instance " +
                                                      std::to_string(seq_));
    }
    const std::uint64_t inits = leave_collective(desc_, rank_, heap_.npes(), seq_);
    if (inits != 1) {
      ++owner_.stats_.multi_init;
      if constexpr (kSafeMode) {
        throw Error(ErrorCode::collective_protocol,
                    "instance " + std::to_string(seq_) + " was initialized " + std::to_string(inits) + " times");
      }
    }
  }

 private:
  void check(int peer) {
    if constexpr (kSafeMode) {
      check_peer(heap_.rank_table()[static_cast<std::size_t>(peer)].descriptor(), peer, rank_, seq_, type_, size_,
                 args_);
    }
  }

  // The sender could not write into our landing buffer because we had not
  // entered yet; pull its data now.
  void consume(int slot, DepositSlot& s, Mode mode, Combiner combiner) {
    const int from = static_cast<int>(s.from.load(relaxed));
    const std::uint64_t nbytes = s.nbytes.load(relaxed);
    const HeapSegment& peer = heap_.rank_table()[static_cast<std::size_t>(from)];
    const std::byte* src = peer.base + s.handle.load(relaxed);
    if (mode == Mode::copy) {
      copy::Active::copy(local(landing_) + static_cast<std::uint64_t>(slot) * size_, src, nbytes);
    } else {
      const std::size_t chunk = std::min({static_cast<std::size_t>(nbytes), kCombineChunk, heap_.local().staging_size});
      const SymAddr tmp = owner_.temp_alloc(chunk);
      for (std::uint64_t off = 0; off < nbytes; off += chunk) {
        const std::size_t len = std::min<std::size_t>(chunk, nbytes - off);
        copy::Active::copy(local(tmp), src + off, len);
        LockWordGuard guard(desc_.acc_lock, rank_);
        combiner(local(landing_) + off, local(tmp), len);
      }
      owner_.temp_free(tmp);
    }
    s.state.store(static_cast<std::uint32_t>(SlotState::consumed), relaxed);
    peer.descriptor().counter.fetch_add(1, std::memory_order_release);
    ++owner_.stats_.handles_consumed;
  }

  Collectives& owner_;
  Heap& heap_;
  int rank_;
  std::uint64_t seq_;
  CollType type_;
  std::uint64_t size_;
  std::uint64_t args_;
  CollectiveDescriptor& desc_;
  SymAddr landing_;
  std::uint64_t deposits_ = 0;
  std::vector<int> consumers_;
};

Collectives::Collectives(Heap& heap)
    : heap_(heap), bcast_algo_(default_bcast_algo()), reduce_algo_(default_reduce_algo()) {
  BcastAlgo bcast = bcast_algo_;
  ReduceAlgo reduce = reduce_algo_;
  for (const std::string_view name : split(heap.config().coll_algo, ',')) {
    if (name == "linear-put") {
      bcast = BcastAlgo::linear_put;
    } else if (name == "binomial-tree") {
      bcast = BcastAlgo::binomial_tree;
    } else if (name == "linear-gather") {
      reduce = ReduceAlgo::linear_gather;
    } else if (name == "recursive-doubling") {
      reduce = ReduceAlgo::recursive_doubling;
    } else {
      throw Error(ErrorCode::invalid_argument, "unknown collective algorithm '" + std::string(name) + "'");
    }
  }
  set_algorithms(bcast, reduce);
}

void Collectives::set_algorithms(BcastAlgo bcast, ReduceAlgo reduce) {
  bcast_algo_ = bcast;
  reduce_algo_ = reduce;
  bcast_impl_ = bcast == BcastAlgo::linear_put ? &Collectives::bcast_linear : &Collectives::bcast_binomial;
}

SymAddr Collectives::temp_alloc(std::size_t nbytes) {
  if (!in_collective_) throw Error(ErrorCode::not_in_collective, "temporary allocation outside a collective");
  const HeapSegment& self = heap_.local();
  StagingHeader& staging = self.header().staging;
  const std::uint64_t reserve = round_up(std::max<std::size_t>(nbytes, 1), kStagingAlign);
  const std::uint64_t top = staging.top.load(relaxed);
  if (reserve > self.staging_size - top) {
    throw Error(ErrorCode::staging_exhausted, "staging region of " + std::to_string(self.staging_size) +
                                                  " bytes cannot hold " + std::to_string(reserve) + " more");
  }
  const std::uint64_t offset = self.capacity + top;
  temps_.emplace_back(offset, reserve);
  staging.top.store(top + reserve, relaxed);
  if (top + reserve > staging.high_water.load(relaxed)) staging.high_water.store(top + reserve, relaxed);
  stats_.staging_high_water = std::max<std::uint64_t>(stats_.staging_high_water, top + reserve);
  return SymAddr(offset);
}

void Collectives::temp_free(SymAddr addr) {
  if (temps_.empty() || temps_.back().first != addr.offset()) {
    throw Error(ErrorCode::collective_protocol, "staging memory must be released in reverse allocation order");
  }
  StagingHeader& staging = heap_.local().header().staging;
  staging.top.store(staging.top.load(relaxed) - temps_.back().second, relaxed);
  temps_.pop_back();
}

std::uint64_t Collectives::staging_watermark(int pe) const {
  return heap_.attach_remote(pe).header().staging.top.load(relaxed);
}

void Collectives::broadcast(int root, SymAddr data, std::size_t nbytes) {
  const int n = heap_.npes();
  if (root < 0 || root >= n) {
    throw Error(ErrorCode::invalid_argument, "broadcast root " + std::to_string(root) + " outside [0, " +
                                                 std::to_string(n) + ")");
  }
  if constexpr (kSafeMode) heap_.check_range(heap_.rank(), data, nbytes);
  if (n == 1 || nbytes == 0) return;
  Instance inst(*this, CollType::broadcast, nbytes, bcast_args(root, bcast_algo_));
  inst.enter(data);
  (this->*bcast_impl_)(inst, root, data);
  inst.finish();
}

void Collectives::bcast_linear(Instance& inst, int root, SymAddr data) {
  const int n = heap_.npes();
  if (heap_.rank() != root) {
    inst.receive(0, root, Mode::copy);
    return;
  }
  for (int pe = 0; pe < n; ++pe) {
    if (pe != root) inst.send(pe, 0, data, Mode::copy);
  }
}

void Collectives::bcast_binomial(Instance& inst, int root, SymAddr data) {
  const int n = heap_.npes();
  const int v = (heap_.rank() - root + n) % n;
  int mask = 1;
  for (; mask < n; mask <<= 1) {
    if ((v & mask) != 0) {
      inst.receive(0, (v - mask + root) % n, Mode::copy);
      break;
    }
  }
  for (mask >>= 1; mask > 0; mask >>= 1) {
    if (v + mask < n) inst.send((v + mask + root) % n, 0, data, Mode::copy);
  }
}

void Collectives::reduce_erased(ReduceOp op, ElemInfo elem, Combiner combiner, SymAddr src, SymAddr dst,
                                std::size_t nelems) {
  const std::size_t nbytes = nelems * elem.size;
  if constexpr (kSafeMode) {
    heap_.check_range(heap_.rank(), src, nbytes);
    heap_.check_range(heap_.rank(), dst, nbytes);
  }
  if (nbytes == 0) return;
  const HeapSegment& self = heap_.local();
  if (heap_.npes() == 1) {
    if (src != dst) std::memmove(self.base + dst.offset(), self.base + src.offset(), nbytes);
    return;
  }
  if (reduce_algo_ == ReduceAlgo::linear_gather) {
    reduce_linear(op, elem, combiner, src, dst, nbytes);
  } else {
    if (src != dst) std::memmove(self.base + dst.offset(), self.base + src.offset(), nbytes);
    reduce_doubling(op, elem, combiner, dst, nbytes);
  }
}

// PE 0 accumulates every contribution into its dst, then pushes the result
// to every other PE's dst.
void Collectives::reduce_linear(ReduceOp op, ElemInfo elem, Combiner combiner, SymAddr src, SymAddr dst,
                                std::size_t nbytes) {
  const int n = heap_.npes();
  const int rank = heap_.rank();
  Instance inst(*this, CollType::reduce, nbytes, reduce_args(op, elem, ReduceAlgo::linear_gather));
  if (rank == 0 && src != dst) std::memmove(inst.local(dst), inst.local(src), nbytes);
  inst.enter(dst);
  if (rank == 0) {
    for (int pe = 1; pe < n; ++pe) inst.receive(pe, pe, Mode::combine, combiner);
    for (int pe = 1; pe < n; ++pe) inst.send(pe, 0, dst, Mode::copy);
  } else {
    inst.send(0, rank, src, Mode::combine, combiner);
    inst.receive(0, 0, Mode::copy);
  }
  inst.finish();
}

// Recursive doubling over the largest power-of-two subset; the remaining
// PEs fold their data into a partner first and get the result back last.
// Incoming partials land in a staging buffer with one slot per round, so
// large reductions run as a sequence of staging-sized instances.
void Collectives::reduce_doubling(ReduceOp op, ElemInfo elem, Combiner combiner, SymAddr dst, std::size_t nbytes) {
  const int n = heap_.npes();
  const int rank = heap_.rank();
  int p2 = 1;
  int rounds = 0;
  while (p2 * 2 <= n) {
    p2 *= 2;
    ++rounds;
  }
  const int extras = n - p2;
  const std::size_t slots = static_cast<std::size_t>(rounds) + 1;
  std::size_t chunk = heap_.local().staging_size / slots / kStagingAlign * kStagingAlign;
  chunk -= chunk % elem.size;
  if (chunk == 0) throw Error(ErrorCode::staging_exhausted, "staging region too small for a reduction round");
  const std::uint64_t args = reduce_args(op, elem, ReduceAlgo::recursive_doubling);

  for (std::size_t off = 0; off < nbytes; off += chunk) {
    const std::size_t len = std::min(chunk, nbytes - off);
    Instance inst(*this, CollType::reduce, len, args);
    const SymAddr acc = dst + off;
    if (rank >= p2) {
      inst.enter(acc);
      inst.send(rank - p2, 0, acc, Mode::copy);
      inst.receive(0, rank - p2, Mode::copy);
    } else {
      const SymAddr landing = temp_alloc(slots * len);
      inst.enter(landing);
      if (rank < extras) {
        inst.receive(0, rank + p2, Mode::copy);
        combiner(inst.local(acc), inst.local(landing), len);
      }
      for (int k = 0; k < rounds; ++k) {
        const int partner = rank ^ (1 << k);
        const int slot = k + 1;
        inst.send(partner, slot, acc, Mode::copy);
        inst.receive(slot, partner, Mode::copy);
        inst.wait_consumed();
        combiner(inst.local(acc), inst.local(landing) + static_cast<std::size_t>(slot) * len, len);
      }
      if (rank < extras) inst.send(rank + p2, 0, acc, Mode::copy);
      inst.wait_consumed();
      temp_free(landing);
    }
    inst.finish();
  }
}

}  // namespace posh
