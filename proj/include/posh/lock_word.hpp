#pragma once

#include "posh/layout.hpp"
#include "posh/wait.hpp"

namespace posh {

/// Cross-process mutual exclusion on a 32-bit word in shared memory: 0 means
/// free, otherwise the holder's rank + 1 (kept for diagnostics).
namespace lock_word {

inline std::uint32_t owner_value(int rank) { return static_cast<std::uint32_t>(rank) + 1; }

inline bool try_lock(AtomicU32& word, int rank) {
  std::uint32_t expected = 0;
  return word.compare_exchange_strong(expected, owner_value(rank), std::memory_order_acquire,
                                      std::memory_order_relaxed);
}

inline void lock(AtomicU32& word, int rank) {
  if (try_lock(word, rank)) return;
  Backoff backoff;
  do {
    backoff.pause();
  } while (word.load(std::memory_order_relaxed) != 0 || !try_lock(word, rank));
}

inline void unlock(AtomicU32& word) { word.store(0, std::memory_order_release); }

}  // namespace lock_word

class LockWordGuard {
 public:
  LockWordGuard(AtomicU32& word, int rank) : word_(word) { lock_word::lock(word_, rank); }
  ~LockWordGuard() { lock_word::unlock(word_); }
  LockWordGuard(const LockWordGuard&) = delete;
  LockWordGuard& operator=(const LockWordGuard&) = delete;

 private:
  AtomicU32& word_;
};

}  // namespace posh
