#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "posh/allocator.hpp"
#include "posh/barrier.hpp"
#include "posh/config.hpp"
#include "posh/heap_segment.hpp"
#include "posh/layout.hpp"
#include "posh/shm_segment.hpp"
#include "posh/sym_addr.hpp"

namespace posh {

struct StaticEntry {
  std::string label;
  std::size_t size;
  std::size_t alignment;
  SymAddr addr;
};

/// The symmetric heap of this PE plus cached mappings of every other PE's
/// heap (the rank table). Constructing a Heap is the collective start-up of
/// the runtime; at most one may exist per process at a time.
class Heap {
 public:
  /// Creates the local segment, attaches every remote segment (retrying
  /// while they do not exist yet) and ends with a global barrier.
  explicit Heap(const RuntimeConfig& config);
  ~Heap();

  Heap(const Heap&) = delete;
  Heap& operator=(const Heap&) = delete;

  int rank() const { return rank_; }
  int npes() const { return npes_; }
  const RuntimeConfig& config() const { return config_; }

  const HeapSegment& local() const { return table_[static_cast<std::size_t>(rank_)]; }
  std::span<const HeapSegment> rank_table() const { return table_; }

  /// Cached attachment of `pe`'s heap. Never maps anything after start-up.
  const HeapSegment& attach_remote(int pe) const;

  /// Number of remote segments this process mapped (self excluded).
  std::size_t segments_opened() const { return mappings_.size() - 1; }

  // Symmetric allocation. Every call is collective and returns only after
  // all PEs have entered it.
  SymAddr shmalloc(std::size_t size);
  SymAddr shmemalign(std::size_t alignment, std::size_t size);
  void shfree(SymAddr addr);

  /// Address of the symmetric object `addr` inside `pe`'s heap, valid in this
  /// process: the remote base plus the object's offset.
  std::byte* translate(SymAddr addr, int pe) const;

  template <class T>
  T* translate_as(SymAddr addr, int pe) const {
    return reinterpret_cast<T*>(translate(addr, pe));
  }

  /// Inverse of translate(addr, rank()) for pointers into the local heap.
  SymAddr symmetric_address(const void* local) const;

  /// Safe-mode range check used by one-sided transfers: `pe` must be a valid
  /// rank and [addr, addr + nbytes) must lie in the user part of the heap.
  void check_range(int pe, SymAddr addr, std::size_t nbytes) const;

  /// Symmetric storage for what would be a global static in the program.
  /// Allowed only before the first ordinary allocation; released by
  /// finalize().
  SymAddr register_static(std::string_view label, std::size_t size, std::size_t alignment);
  std::optional<SymAddr> lookup_static(std::string_view label) const;
  const std::vector<StaticEntry>& statics() const { return statics_; }
  bool init_epoch_open() const { return init_epoch_open_; }
  void close_init_epoch() { init_epoch_open_ = false; }

  void barrier_all();

  /// Allocator metadata of any PE, read under that PE's allocator lock.
  std::uint64_t allocator_state_hash(int pe) const;
  std::vector<BlockInfo> allocator_blocks(int pe) const;
  std::uint64_t allocator_lower_bound() const;

  /// Collective instance numbering shared by barriers and the
  /// descriptor-based collectives. All PEs advance it identically.
  std::uint64_t next_collective_seq() { return ++collective_seq_; }
  std::uint64_t collective_seq() const { return collective_seq_; }

  /// Collective shutdown: barrier, release static registrations, unmap.
  void finalize();
  bool finalized() const { return finalized_; }

  /// Clears the debug-hold flag of a PE held at start-up. Usable from any
  /// process, e.g. a tool run by the person debugging the job.
  static void release_debug_hold(std::string_view jobid, int rank, const AttachPolicy& policy = {});

 private:
  enum class AllocKind : std::uint64_t { malloc = 1, align = 2, free = 3, statics = 4 };

  void create_local_segment();
  HeapSegment attach_segment(int pe);
  void debug_hold();
  SymAddr symmetric_allocate(AllocKind kind, std::size_t size, std::size_t alignment, std::uint64_t label_hash);
  void verify_symmetric_request(AllocKind kind, std::uint64_t a, std::uint64_t b, std::uint64_t label_hash);
  void release_mappings() noexcept;

  RuntimeConfig config_;
  int rank_;
  int npes_;
  std::size_t capacity_ = 0;
  std::size_t staging_size_ = 0;
  std::vector<shm::Segment> mappings_;  // [0] is the local segment
  std::vector<HeapSegment> table_;
  Barrier barrier_;
  std::vector<StaticEntry> statics_;
  bool init_epoch_open_ = true;
  bool finalized_ = false;
  std::uint64_t collective_seq_ = 0;
  std::uint64_t alloc_seq_ = 0;
};

}  // namespace posh
