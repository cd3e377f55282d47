#include "posh/allocator.hpp"

#include <cassert>

namespace posh {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    h ^= (value >> (8 * i)) & 0xff;
    h *= kFnvPrime;
  }
}

}  // namespace

void SegmentAllocator::format(std::byte* base, AllocatorHeader& header, std::uint64_t begin, std::uint64_t end) {
  assert(begin % kMinAlignment == 0 && end % kMinAlignment == 0 && end - begin >= kMinBlock);
  header.begin.store(begin, std::memory_order_relaxed);
  header.end.store(end, std::memory_order_relaxed);
  header.live_blocks.store(0, std::memory_order_relaxed);
  header.bytes_in_use.store(0, std::memory_order_relaxed);
  SegmentAllocator view(base, header);
  view.set_block(begin, end - begin, false, 0);
}

void SegmentAllocator::set_block(std::uint64_t offset, std::uint64_t size, bool in_use, std::uint64_t prev_size) {
  Tag* t = tag(offset);
  t->size_used = size | (in_use ? 1 : 0);
  t->prev_size = prev_size;
}

void SegmentAllocator::fix_next_prev(std::uint64_t offset) {
  const std::uint64_t next = offset + size_of(tag(offset));
  if (next < upper_bound()) tag(next)->prev_size = size_of(tag(offset));
}

std::optional<std::uint64_t> SegmentAllocator::allocate(std::size_t size, std::size_t alignment) {
  assert(size > 0 && (alignment & (alignment - 1)) == 0);
  const std::uint64_t need = round_up(size, kMinAlignment);
  const std::uint64_t align = alignment < kMinAlignment ? kMinAlignment : alignment;
  const std::uint64_t end = upper_bound();

  for (std::uint64_t off = lower_bound(); off < end; off += size_of(tag(off))) {
    const Tag* t = tag(off);
    if (used(t)) continue;
    const std::uint64_t block_size = size_of(t);

    std::uint64_t payload = round_up(off + kBlockHeader, align);
    std::uint64_t lead = payload - kBlockHeader - off;
    if (lead != 0 && lead < kMinBlock) {
      payload += align;
      lead += align;
    }
    if (payload + need > off + block_size) continue;

    std::uint64_t block = off;
    std::uint64_t prev = t->prev_size;
    if (lead != 0) {
      set_block(off, lead, false, prev);
      block = off + lead;
      prev = lead;
    }
    const std::uint64_t remaining = off + block_size - block;
    const std::uint64_t wanted = kBlockHeader + need;
    std::uint64_t taken = remaining;
    if (remaining - wanted >= kMinBlock) {
      taken = wanted;
      set_block(block + taken, remaining - taken, false, taken);
    }
    set_block(block, taken, true, prev);
    fix_next_prev(block);
    if (taken != remaining) fix_next_prev(block + taken);

    header_.live_blocks.fetch_add(1, std::memory_order_relaxed);
    header_.bytes_in_use.fetch_add(taken, std::memory_order_relaxed);
    return block + kBlockHeader;
  }
  return std::nullopt;
}

SegmentAllocator::FreeCheck SegmentAllocator::check_free(std::uint64_t payload) const {
  const std::uint64_t end = upper_bound();
  for (std::uint64_t off = lower_bound(); off < end; off += size_of(tag(off))) {
    const Tag* t = tag(off);
    const std::uint64_t next = off + size_of(t);
    if (payload >= next) continue;
    if (!used(t)) return payload >= off ? FreeCheck::already_free : FreeCheck::unknown_address;
    return payload == off + kBlockHeader ? FreeCheck::ok : FreeCheck::unknown_address;
  }
  return FreeCheck::unknown_address;
}

void SegmentAllocator::free(std::uint64_t payload) {
  std::uint64_t block = payload - kBlockHeader;
  std::uint64_t size = size_of(tag(block));
  header_.live_blocks.fetch_sub(1, std::memory_order_relaxed);
  header_.bytes_in_use.fetch_sub(size, std::memory_order_relaxed);

  const std::uint64_t next = block + size;
  if (next < upper_bound() && !used(tag(next))) size += size_of(tag(next));

  std::uint64_t prev_size = tag(block)->prev_size;
  if (block > lower_bound()) {
    const std::uint64_t prev = block - prev_size;
    if (!used(tag(prev))) {
      block = prev;
      size += size_of(tag(prev));
      prev_size = tag(prev)->prev_size;
    }
  }
  set_block(block, size, false, prev_size);
  fix_next_prev(block);
}

std::vector<BlockInfo> SegmentAllocator::blocks() const {
  std::vector<BlockInfo> out;
  const std::uint64_t end = upper_bound();
  for (std::uint64_t off = lower_bound(); off < end; off += size_of(tag(off))) {
    out.push_back({off, size_of(tag(off)), used(tag(off))});
  }
  return out;
}

std::uint64_t SegmentAllocator::state_hash() const {
  std::uint64_t h = kFnvOffset;
  const std::uint64_t end = upper_bound();
  for (std::uint64_t off = lower_bound(); off < end; off += size_of(tag(off))) {
    fnv_mix(h, off);
    fnv_mix(h, tag(off)->size_used);
  }
  return h;
}

}  // namespace posh
