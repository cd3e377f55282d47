#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "posh/layout.hpp"

namespace posh {

struct BlockInfo {
  std::uint64_t offset;  // block header offset from the segment base
  std::uint64_t size;    // header included
  bool used;

  friend bool operator==(const BlockInfo&, const BlockInfo&) = default;
};

/// Deterministic first-fit allocator whose entire state lives inside the
/// segment it manages. Blocks are kept in address order, each prefixed by a
/// 16-byte boundary tag; frees coalesce with both neighbours. Given the same
/// sequence of calls it always returns the same offsets, which is what makes
/// symmetric allocation symmetric.
///
/// The class is a view: it does no locking and owns no memory.
class SegmentAllocator {
 public:
  static constexpr std::size_t kBlockHeader = 16;
  static constexpr std::size_t kMinAlignment = 16;
  static constexpr std::size_t kMinBlock = 32;

  enum class FreeCheck { ok, unknown_address, already_free };

  SegmentAllocator(std::byte* base, AllocatorHeader& header) : base_(base), header_(header) {}

  /// Lays out a single free block covering [begin, end). Both bounds must be
  /// multiples of kMinAlignment.
  static void format(std::byte* base, AllocatorHeader& header, std::uint64_t begin, std::uint64_t end);

  /// Returns the payload offset, or nullopt when no free block fits.
  /// `alignment` must be a power of two.
  std::optional<std::uint64_t> allocate(std::size_t size, std::size_t alignment = kMinAlignment);

  /// Classifies a payload offset by walking the block list.
  FreeCheck check_free(std::uint64_t payload) const;

  /// Releases a payload previously returned by allocate(). The caller
  /// validates with check_free() when it cannot trust the offset.
  void free(std::uint64_t payload);

  std::vector<BlockInfo> blocks() const;

  /// FNV-1a over the (offset, size, used) block sequence.
  std::uint64_t state_hash() const;

  std::uint64_t bytes_in_use() const { return header_.bytes_in_use.load(std::memory_order_relaxed); }
  std::uint64_t live_blocks() const { return header_.live_blocks.load(std::memory_order_relaxed); }
  std::uint64_t lower_bound() const { return header_.begin.load(std::memory_order_relaxed); }
  std::uint64_t upper_bound() const { return header_.end.load(std::memory_order_relaxed); }

 private:
  struct Tag {
    std::uint64_t size_used;  // size | 1 when used
    std::uint64_t prev_size;  // size of the preceding block, 0 for the first
  };

  Tag* tag(std::uint64_t offset) const { return reinterpret_cast<Tag*>(base_ + offset); }
  static std::uint64_t size_of(const Tag* t) { return t->size_used & ~std::uint64_t{1}; }
  static bool used(const Tag* t) { return (t->size_used & 1) != 0; }

  void set_block(std::uint64_t offset, std::uint64_t size, bool in_use, std::uint64_t prev_size);
  void fix_next_prev(std::uint64_t offset);

  std::byte* base_;
  AllocatorHeader& header_;
};

}  // namespace posh
