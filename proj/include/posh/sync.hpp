#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>

#include "posh/build_config.hpp"
#include "posh/error.hpp"
#include "posh/heap.hpp"
#include "posh/sym_addr.hpp"

namespace posh {

// Named locks. A key hashes to a home PE and to a cell of that PE's lock
// table; every PE of the job resolves the same key to the same lock word.
// Locks are not reentrant and only the holder may release one. A PE that
// dies while holding a lock leaves it held.

std::uint64_t lock_key(std::string_view label) noexcept;
std::uint64_t lock_key(SymAddr addr) noexcept;

void lock_acquire(const Heap& heap, std::uint64_t key);
void lock_release(const Heap& heap, std::uint64_t key);
/// Takes the lock if it is free; never blocks.
bool lock_test(const Heap& heap, std::uint64_t key);

/// PE holding `key`, or -1.
int lock_holder(const Heap& heap, std::uint64_t key);

enum class AtomicOp { swap, compare_swap, fetch_add, fetch_inc };

template <class T>
concept AtomicOperand = std::is_same_v<T, std::int32_t> || std::is_same_v<T, std::uint32_t> ||
                        std::is_same_v<T, std::int64_t> || std::is_same_v<T, std::uint64_t>;

/// Read-modify-write of the integer at `addr` on PE `pe`, atomic with
/// respect to every other atomic_apply on that word. Returns the previous
/// value. compare_swap stores `operand` only if the current value equals
/// `expected`; fetch_inc ignores `operand`.
template <AtomicOperand T>
T atomic_apply(const Heap& heap, int pe, SymAddr addr, AtomicOp op, T operand = 0, T expected = 0) {
  if (addr.offset() % sizeof(T) != 0) {
    throw Error(ErrorCode::misaligned, "atomic on offset " + std::to_string(addr.offset()) + " needs " +
                                           std::to_string(sizeof(T)) + "-byte alignment");
  }
  if constexpr (kSafeMode) heap.check_range(pe, addr, sizeof(T));
  std::atomic_ref<T> cell(*heap.translate_as<T>(addr, pe));
  switch (op) {
    case AtomicOp::swap: return cell.exchange(operand, std::memory_order_acq_rel);
    case AtomicOp::compare_swap:
      cell.compare_exchange_strong(expected, operand, std::memory_order_acq_rel, std::memory_order_acquire);
      return expected;
    case AtomicOp::fetch_add: return cell.fetch_add(operand, std::memory_order_acq_rel);
    case AtomicOp::fetch_inc: return cell.fetch_add(1, std::memory_order_acq_rel);
  }
  throw Error(ErrorCode::invalid_argument, "unknown atomic operation");
}

template <AtomicOperand T>
T atomic_fetch_add(const Heap& heap, int pe, SymAddr addr, T value) {
  return atomic_apply<T>(heap, pe, addr, AtomicOp::fetch_add, value);
}

template <AtomicOperand T>
T atomic_fetch_inc(const Heap& heap, int pe, SymAddr addr) {
  return atomic_apply<T>(heap, pe, addr, AtomicOp::fetch_inc);
}

template <AtomicOperand T>
T atomic_swap(const Heap& heap, int pe, SymAddr addr, T value) {
  return atomic_apply<T>(heap, pe, addr, AtomicOp::swap, value);
}

template <AtomicOperand T>
T atomic_compare_swap(const Heap& heap, int pe, SymAddr addr, T expected, T desired) {
  return atomic_apply<T>(heap, pe, addr, AtomicOp::compare_swap, desired, expected);
}

}  // namespace posh
