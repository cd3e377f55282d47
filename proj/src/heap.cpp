#include "posh/heap.hpp"

#include <fmt/core.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <thread>

#include "posh/build_config.hpp"
#include "posh/descriptor.hpp"
#include "posh/error.hpp"
#include "posh/lock_word.hpp"

namespace posh {

namespace {

std::atomic<bool> g_live_heap{false};

constexpr auto relaxed = std::memory_order_relaxed;

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool process_alive(std::int64_t pid) {
  if (pid <= 0) return false;
  if (::kill(static_cast<pid_t>(pid), 0) == 0) return true;
  return errno == EPERM;
}

// Opens `name` and waits for its creator to publish the magic word.
shm::Segment open_published(const std::string& name, const AttachPolicy& policy) {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + policy.timeout;
  auto delay = policy.initial;
  std::optional<shm::Segment> seg;
  for (;;) {
    if (!seg) seg = shm::Segment::open(name);
    if (seg && seg->size() >= sizeof(SegmentHeader)) {
      const auto& hdr = *reinterpret_cast<const SegmentHeader*>(seg->data());
      if (hdr.magic.load(std::memory_order_acquire) == kSegmentMagic) return std::move(*seg);
    }
    if (clock::now() >= deadline) {
      throw Error(ErrorCode::attach_timeout, "heap " + name + " did not appear within " +
                                                 std::to_string(policy.timeout.count()) + " ms");
    }
    std::this_thread::sleep_for(delay);
    delay = std::min(delay * 2, policy.cap);
  }
}

}  // namespace

Heap::Heap(const RuntimeConfig& config) : config_(config), rank_(config.rank), npes_(config.npes) {
  if (npes_ < 1 || npes_ > kMaxPes) {
    throw Error(ErrorCode::invalid_argument, "npes must be in [1, " + std::to_string(kMaxPes) + "], got " +
                                                 std::to_string(npes_));
  }
  if (rank_ < 0 || rank_ >= npes_) {
    throw Error(ErrorCode::invalid_argument,
                "rank " + std::to_string(rank_) + " outside [0, " + std::to_string(npes_) + ")");
  }
  if (config_.jobid.empty() || config_.jobid.size() >= sizeof(SegmentHeader::jobid)) {
    throw Error(ErrorCode::invalid_argument, "job id must have 1 to 63 characters");
  }
  capacity_ = round_up(config_.heap_size, kPageSize);
  staging_size_ = round_up(config_.staging_size, kPageSize);
  if (config_.heap_size < kHeaderSize + kPageSize) {
    throw Error(ErrorCode::capacity_too_small, "heap of " + std::to_string(config_.heap_size) +
                                                   " bytes; at least " + std::to_string(kHeaderSize + kPageSize) +
                                                   " are needed");
  }
  if (g_live_heap.exchange(true)) {
    throw Error(ErrorCode::already_initialized, "a symmetric heap already exists in this process");
  }

  try {
    create_local_segment();
    table_.resize(static_cast<std::size_t>(npes_));
    table_[static_cast<std::size_t>(rank_)] =
        HeapSegment{rank_, mappings_[0].name(), mappings_[0].data(), capacity_, staging_size_};
    debug_hold();
    for (int pe = 0; pe < npes_; ++pe) {
      if (pe != rank_) table_[static_cast<std::size_t>(pe)] = attach_segment(pe);
    }
    if (config_.debug) {
      fmt::print(stderr, "posh[{}]: attached {} heaps of {} bytes (job {})\n", rank_, npes_, capacity_,
                 config_.jobid);
    }
    barrier_all();
  } catch (...) {
    release_mappings();
    g_live_heap.store(false);
    throw;
  }
}

Heap::~Heap() {
  if (!finalized_) {
    release_mappings();
    g_live_heap.store(false);
  }
}

void Heap::create_local_segment() {
  const std::string name = shm::segment_name(config_.jobid, rank_);
  const std::size_t total = capacity_ + staging_size_;
  std::optional<shm::Segment> seg = shm::Segment::create(name, total);
  if (!seg) {
    std::int64_t owner = 0;
    if (auto old = shm::Segment::open(name); old && old->size() >= sizeof(SegmentHeader)) {
      owner = reinterpret_cast<const SegmentHeader*>(old->data())->owner_pid;
    }
    if (process_alive(owner)) {
      throw Error(ErrorCode::name_collision,
                  "heap " + name + " belongs to live process " + std::to_string(owner));
    }
    shm::Segment::remove(name);
    seg = shm::Segment::create(name, total);
    if (!seg) throw Error(ErrorCode::name_collision, "heap " + name + " was recreated concurrently");
  }

  auto& hdr = *reinterpret_cast<SegmentHeader*>(seg->data());
  hdr.owner_pid = ::getpid();
  hdr.abi = abi_tag();
  hdr.version = kLayoutVersion;
  hdr.rank = rank_;
  hdr.npes = npes_;
  hdr.capacity = capacity_;
  hdr.staging_size = staging_size_;
  std::memcpy(hdr.jobid, config_.jobid.data(), config_.jobid.size());
  SegmentAllocator::format(seg->data(), hdr.alloc, kHeaderSize, capacity_);
  if (config_.debug_hold_rank == rank_) hdr.debug_hold.store(1, relaxed);
  hdr.magic.store(kSegmentMagic, std::memory_order_release);
  mappings_.push_back(std::move(*seg));
}

HeapSegment Heap::attach_segment(int pe) {
  const std::string name = shm::segment_name(config_.jobid, pe);
  shm::Segment seg = open_published(name, config_.attach);
  const auto& hdr = *reinterpret_cast<const SegmentHeader*>(seg.data());
  if (hdr.abi != abi_tag() || hdr.version != kLayoutVersion) {
    throw Error(ErrorCode::abi_mismatch, "heap " + name + " was created by an incompatible build");
  }
  if (hdr.rank != pe || hdr.npes != npes_ || std::string_view(hdr.jobid) != config_.jobid) {
    throw Error(ErrorCode::symmetry_violation, "heap " + name + " describes a different job layout");
  }
  if (hdr.capacity != capacity_ || hdr.staging_size != staging_size_ ||
      seg.size() < capacity_ + staging_size_) {
    throw Error(ErrorCode::symmetry_violation, "heap " + name + " has capacity " + std::to_string(hdr.capacity) +
                                                   ", this PE uses " + std::to_string(capacity_));
  }
  HeapSegment entry{pe, name, seg.data(), capacity_, staging_size_};
  mappings_.push_back(std::move(seg));
  return entry;
}

void Heap::debug_hold() {
  auto& flag = local().header().debug_hold;
  if (flag.load(std::memory_order_acquire) == 0) return;
  fmt::print(stderr, "posh: PE {} waiting for debugger, pid {} (release with: posh-release {} {})\n", rank_,
             ::getpid(), config_.jobid, rank_);
  std::fflush(stderr);
  while (flag.load(std::memory_order_acquire) != 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
}

void Heap::release_debug_hold(std::string_view jobid, int rank, const AttachPolicy& policy) {
  shm::Segment seg = open_published(shm::segment_name(jobid, rank), policy);
  reinterpret_cast<SegmentHeader*>(seg.data())->debug_hold.store(0, std::memory_order_release);
}

void Heap::release_mappings() noexcept {
  if (!mappings_.empty()) shm::Segment::remove(mappings_[0].name());
  mappings_.clear();
  table_.clear();
}

const HeapSegment& Heap::attach_remote(int pe) const {
  if (pe < 0 || pe >= npes_) {
    throw Error(ErrorCode::invalid_argument, "PE " + std::to_string(pe) + " outside [0, " + std::to_string(npes_) + ")");
  }
  return table_[static_cast<std::size_t>(pe)];
}

std::byte* Heap::translate(SymAddr addr, int pe) const {
  if constexpr (kSafeMode) {
    if (pe < 0 || pe >= npes_) {
      throw Error(ErrorCode::invalid_argument,
                  "PE " + std::to_string(pe) + " outside [0, " + std::to_string(npes_) + ")");
    }
    if (addr.offset() >= capacity_ + staging_size_) {
      throw Error(ErrorCode::out_of_bounds,
                  "offset " + std::to_string(addr.offset()) + " beyond heap of " + std::to_string(capacity_));
    }
  }
  return table_[static_cast<std::size_t>(pe)].base + addr.offset();
}

SymAddr Heap::symmetric_address(const void* local_ptr) const {
  const auto* p = static_cast<const std::byte*>(local_ptr);
  const std::byte* base = local().base;
  if (p < base || p >= base + capacity_ + staging_size_) {
    throw Error(ErrorCode::out_of_bounds, "pointer is not inside the local symmetric heap");
  }
  return SymAddr(static_cast<std::uint64_t>(p - base));
}

void Heap::check_range(int pe, SymAddr addr, std::size_t nbytes) const {
  if (pe < 0 || pe >= npes_) {
    throw Error(ErrorCode::invalid_argument, "PE " + std::to_string(pe) + " outside [0, " + std::to_string(npes_) + ")");
  }
  const std::uint64_t off = addr.offset();
  if (off < kHeaderSize || off > capacity_ || nbytes > capacity_ - off) {
    throw Error(ErrorCode::out_of_bounds, "range [" + std::to_string(off) + ", " + std::to_string(off + nbytes) +
                                              ") outside the user heap [" + std::to_string(kHeaderSize) + ", " +
                                              std::to_string(capacity_) + ")");
  }
}

SymAddr Heap::shmalloc(std::size_t size) {
  if (size == 0) throw Error(ErrorCode::invalid_argument, "shmalloc(0)");
  close_init_epoch();
  return symmetric_allocate(AllocKind::malloc, size, SegmentAllocator::kMinAlignment, 0);
}

SymAddr Heap::shmemalign(std::size_t alignment, std::size_t size) {
  if (!is_power_of_two(alignment)) {
    throw Error(ErrorCode::invalid_argument, "alignment " + std::to_string(alignment) + " is not a power of two");
  }
  if (size == 0) throw Error(ErrorCode::invalid_argument, "shmemalign with size 0");
  close_init_epoch();
  return symmetric_allocate(AllocKind::align, size, alignment, 0);
}

SymAddr Heap::register_static(std::string_view label, std::size_t size, std::size_t alignment) {
  if (!init_epoch_open_) {
    throw Error(ErrorCode::init_epoch_closed, "static '" + std::string(label) + "' registered after the first allocation");
  }
  if (lookup_static(label)) throw Error(ErrorCode::duplicate_label, "static '" + std::string(label) + "' already exists");
  if (size == 0 || !is_power_of_two(alignment)) {
    throw Error(ErrorCode::invalid_argument, "static '" + std::string(label) + "' needs a size and power-of-two alignment");
  }
  const SymAddr addr = symmetric_allocate(AllocKind::statics, size, alignment, fnv1a(label));
  statics_.push_back({std::string(label), size, alignment, addr});
  return addr;
}

std::optional<SymAddr> Heap::lookup_static(std::string_view label) const {
  for (const auto& entry : statics_) {
    if (entry.label == label) return entry.addr;
  }
  return std::nullopt;
}

void Heap::verify_symmetric_request(AllocKind kind, std::uint64_t a, std::uint64_t b, std::uint64_t label_hash) {
  AllocRequest& mine = local().header().request;
  mine.seq.store(alloc_seq_, relaxed);
  mine.kind.store(static_cast<std::uint64_t>(kind), relaxed);
  mine.size.store(a, relaxed);
  mine.alignment.store(b, relaxed);
  mine.label_hash.store(label_hash, relaxed);
  barrier_all();
  for (int pe = 0; pe < npes_; ++pe) {
    const AllocRequest& theirs = table_[static_cast<std::size_t>(pe)].header().request;
    if (theirs.seq.load(relaxed) != alloc_seq_ || theirs.kind.load(relaxed) != static_cast<std::uint64_t>(kind) ||
        theirs.size.load(relaxed) != a || theirs.alignment.load(relaxed) != b ||
        theirs.label_hash.load(relaxed) != label_hash) {
      throw Error(ErrorCode::symmetry_violation,
                  fmt::format("symmetric allocation #{} differs between PE {} (kind {}, {}, {}) and PE {} "
                              "(kind {}, {}, {})",
                              alloc_seq_, rank_, static_cast<std::uint64_t>(kind), a, b, pe, theirs.kind.load(relaxed),
                              theirs.size.load(relaxed), theirs.alignment.load(relaxed)));
    }
  }
}

SymAddr Heap::symmetric_allocate(AllocKind kind, std::size_t size, std::size_t alignment, std::uint64_t label_hash) {
  ++alloc_seq_;
  if constexpr (kSafeMode) verify_symmetric_request(kind, size, alignment, label_hash);
  std::optional<std::uint64_t> offset;
  {
    SegmentHeader& hdr = local().header();
    LockWordGuard guard(hdr.alloc.lock, rank_);
    offset = SegmentAllocator(local().base, hdr.alloc).allocate(size, alignment);
  }
  barrier_all();
  if (!offset) {
    throw Error(ErrorCode::out_of_memory,
                "no room for " + std::to_string(size) + " bytes aligned to " + std::to_string(alignment));
  }
  return SymAddr(*offset);
}

void Heap::shfree(SymAddr addr) {
  ++alloc_seq_;
  if constexpr (kSafeMode) {
    verify_symmetric_request(AllocKind::free, addr.offset(), 0, 0);
    for (const auto& entry : statics_) {
      if (entry.addr == addr) {
        throw Error(ErrorCode::invalid_free, "static '" + entry.label + "' is released by finalize, not shfree");
      }
    }
  }
  {
    SegmentHeader& hdr = local().header();
    LockWordGuard guard(hdr.alloc.lock, rank_);
    SegmentAllocator alloc(local().base, hdr.alloc);
    if constexpr (kSafeMode) {
      switch (alloc.check_free(addr.offset())) {
        case SegmentAllocator::FreeCheck::ok: break;
        case SegmentAllocator::FreeCheck::already_free:
          throw Error(ErrorCode::invalid_free, "offset " + std::to_string(addr.offset()) + " is already free");
        case SegmentAllocator::FreeCheck::unknown_address:
          throw Error(ErrorCode::invalid_free,
                      "offset " + std::to_string(addr.offset()) + " was not returned by a symmetric allocation");
      }
    }
    alloc.free(addr.offset());
  }
  barrier_all();
}

void Heap::barrier_all() {
  const std::uint64_t seq = next_collective_seq();
  if (npes_ == 1) return;
  CollectiveDescriptor& desc = local().descriptor();
  enter_collective(desc, rank_, seq, CollType::barrier, 0, 0, 0);
  barrier_.wait(table_, rank_, seq);
  leave_collective(desc, rank_, npes_, seq);
}

std::uint64_t Heap::allocator_state_hash(int pe) const {
  const HeapSegment& seg = attach_remote(pe);
  LockWordGuard guard(seg.header().alloc.lock, rank_);
  return SegmentAllocator(seg.base, seg.header().alloc).state_hash();
}

std::vector<BlockInfo> Heap::allocator_blocks(int pe) const {
  const HeapSegment& seg = attach_remote(pe);
  LockWordGuard guard(seg.header().alloc.lock, rank_);
  return SegmentAllocator(seg.base, seg.header().alloc).blocks();
}

std::uint64_t Heap::allocator_lower_bound() const { return local().header().alloc.begin.load(relaxed); }

void Heap::finalize() {
  if (finalized_) return;
  barrier_all();
  {
    SegmentHeader& hdr = local().header();
    LockWordGuard guard(hdr.alloc.lock, rank_);
    SegmentAllocator alloc(local().base, hdr.alloc);
    for (auto it = statics_.rbegin(); it != statics_.rend(); ++it) alloc.free(it->addr.offset());
  }
  statics_.clear();
  release_mappings();
  finalized_ = true;
  g_live_heap.store(false);
}

}  // namespace posh
