#include "posh/sync.hpp"

#include "posh/lock_word.hpp"

namespace posh {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Cell 0 of the key space means "unused", so no key may hash to it.
std::uint64_t nonzero(std::uint64_t h) { return h == 0 ? 1 : h; }

// Finds the cell owning `key` in its home PE's table, claiming a free one on
// first use. Cells are never released, so a probe never skips a live key.
AtomicU32& lock_cell(const Heap& heap, std::uint64_t key) {
  const int home = static_cast<int>(key % static_cast<std::uint64_t>(heap.npes()));
  LockCell* table = heap.rank_table()[static_cast<std::size_t>(home)].header().locks;
  const std::size_t start = static_cast<std::size_t>((key >> 16) % kLockTableSize);
  for (std::size_t i = 0; i < kLockTableSize; ++i) {
    LockCell& cell = table[(start + i) % kLockTableSize];
    std::uint64_t current = cell.key.load(std::memory_order_acquire);
    if (current == 0 && cell.key.compare_exchange_strong(current, key, std::memory_order_acq_rel)) {
      return cell.word;
    }
    if (current == key) return cell.word;
  }
  throw Error(ErrorCode::lock_table_full, "no free lock cell on PE " + std::to_string(home));
}

void check_not_held(const AtomicU32& word, const Heap& heap) {
  if (word.load(std::memory_order_relaxed) == lock_word::owner_value(heap.rank())) {
    throw Error(ErrorCode::lock_reentry, "PE " + std::to_string(heap.rank()) + " already holds this lock");
  }
}

}  // namespace

std::uint64_t lock_key(std::string_view label) noexcept { return nonzero(fnv1a(label.data(), label.size())); }

std::uint64_t lock_key(SymAddr addr) noexcept {
  const std::uint64_t off = addr.offset();
  return nonzero(fnv1a(&off, sizeof off) ^ 0x5bd1e995ULL);
}

void lock_acquire(const Heap& heap, std::uint64_t key) {
  AtomicU32& word = lock_cell(heap, nonzero(key));
  check_not_held(word, heap);
  lock_word::lock(word, heap.rank());
}

bool lock_test(const Heap& heap, std::uint64_t key) {
  AtomicU32& word = lock_cell(heap, nonzero(key));
  check_not_held(word, heap);
  return lock_word::try_lock(word, heap.rank());
}

void lock_release(const Heap& heap, std::uint64_t key) {
  AtomicU32& word = lock_cell(heap, nonzero(key));
  const std::uint32_t holder = word.load(std::memory_order_relaxed);
  if (holder != lock_word::owner_value(heap.rank())) {
    throw Error(ErrorCode::lock_not_held, "PE " + std::to_string(heap.rank()) + " releases a lock " +
                                              (holder == 0 ? std::string("nobody holds")
                                                           : "held by PE " + std::to_string(holder - 1)));
  }
  lock_word::unlock(word);
}

int lock_holder(const Heap& heap, std::uint64_t key) {
  const std::uint32_t holder = lock_cell(heap, nonzero(key)).load(std::memory_order_acquire);
  return static_cast<int>(holder) - 1;
}

}  // namespace posh
