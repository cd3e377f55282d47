#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>

// Shared-memory layout of one PE's segment:
//
//   [0, kHeaderSize)              SegmentHeader (allocator, barrier cells,
//                                 collective descriptor, lock table)
//   [kHeaderSize, capacity)       symmetric heap managed by the allocator
//   [capacity, capacity+staging)  staging region for temporaries created
//                                 inside collectives
//
// Every PE uses the same layout, so remote PEs find the descriptor, barrier
// cells and lock table at fixed offsets without coordination.

namespace posh {

inline constexpr int kMaxPes = 256;
inline constexpr int kMaxBarrierRounds = 8;  // ceil(log2(kMaxPes))
inline constexpr std::size_t kLockTableSize = 512;
inline constexpr std::size_t kPageSize = 4096;

inline constexpr std::uint64_t kSegmentMagic = 0x504F'5348'4845'4150ULL;  // "POSHHEAP"
inline constexpr std::uint32_t kLayoutVersion = 1;

using AtomicU32 = std::atomic<std::uint32_t>;
using AtomicU64 = std::atomic<std::uint64_t>;
static_assert(AtomicU32::is_always_lock_free && AtomicU64::is_always_lock_free,
              "cross-process atomics must be lock-free");

enum class CollType : std::uint32_t { none = 0, barrier = 1, broadcast = 2, reduce = 3 };

enum class SlotState : std::uint32_t {
  empty = 0,
  writing = 1,    // sender is copying straight into the landing buffer
  delivered = 2,  // data is in place
  handle = 3,     // only a handle to the sender's buffer was left
  consumed = 4,   // receiver pulled the handle's data
};

/// One incoming transfer of a collective instance.
struct DepositSlot {
  AtomicU32 state;
  AtomicU32 from;
  AtomicU64 handle;  // segment offset of the sender's source bytes
  AtomicU64 nbytes;
};

/// Per-PE record coordinating the collective this PE is part of. Remote PEs
/// may initialize it before the owner enters the call.
struct CollectiveDescriptor {
  AtomicU32 lock;         // 0 free, holder rank + 1 otherwise
  AtomicU32 in_progress;  // set by the owner on entry or by an early remote
  AtomicU32 ctype;        // CollType
  AtomicU32 entered;      // owner is inside the call
  AtomicU64 seq;          // instance number the fields describe
  AtomicU64 done_seq;     // last instance this PE completed
  AtomicU64 buf;          // landing buffer (segment offset), 0 = none yet
  AtomicU64 counter;      // remote PEs that finished reading our data
  AtomicU64 size;         // bytes per transfer of this instance
  AtomicU64 args;         // root / operator fingerprint, checked in safe mode
  AtomicU64 init_count;   // times this instance was initialized
  AtomicU32 acc_lock;     // serializes combines into the landing buffer
  AtomicU32 reserved;
  DepositSlot slots[kMaxPes];
};

struct BarrierCells {
  AtomicU32 flags[2][kMaxBarrierRounds];
};

struct AllocatorHeader {
  AtomicU32 lock;
  AtomicU32 reserved;
  AtomicU64 begin;  // offset of the first block
  AtomicU64 end;    // one past the last block
  AtomicU64 live_blocks;
  AtomicU64 bytes_in_use;
};

/// Arguments of the symmetric allocation in flight; compared across PEs in
/// safe mode.
struct AllocRequest {
  AtomicU64 seq;
  AtomicU64 kind;
  AtomicU64 size;
  AtomicU64 alignment;
  AtomicU64 label_hash;
};

struct StagingHeader {
  AtomicU64 top;
  AtomicU64 high_water;
};

struct LockCell {
  AtomicU64 key;   // 0 = unused
  AtomicU32 word;  // 0 free, holder rank + 1 otherwise
  AtomicU32 reserved;
};

struct SegmentHeader {
  AtomicU64 magic;  // written last; attachers wait for it
  std::uint32_t abi;
  std::uint32_t version;
  std::int32_t rank;
  std::int32_t npes;
  std::uint64_t capacity;
  std::uint64_t staging_size;
  std::int64_t owner_pid;
  char jobid[64];
  AtomicU32 debug_hold;
  alignas(64) AllocatorHeader alloc;
  alignas(64) AllocRequest request;
  alignas(64) StagingHeader staging;
  alignas(64) BarrierCells barrier;
  alignas(64) CollectiveDescriptor coll;
  alignas(64) LockCell locks[kLockTableSize];
};

inline constexpr std::size_t round_up(std::size_t value, std::size_t alignment) {
  return (value + alignment - 1) / alignment * alignment;
}

/// Fixed prefix reserved in every heap; user allocations start at or after it.
inline constexpr std::size_t kHeaderSize = round_up(sizeof(SegmentHeader), kPageSize);

/// Word size, endianness, long double width and layout version packed into
/// one word. PEs only interoperate when their tags are equal.
std::uint32_t abi_tag() noexcept;

}  // namespace posh
