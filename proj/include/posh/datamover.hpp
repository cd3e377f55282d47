#pragma once

#include <cstddef>
#include <cstring>
#include <string>
#include <type_traits>

#include "posh/build_config.hpp"
#include "posh/copy.hpp"
#include "posh/error.hpp"
#include "posh/heap.hpp"
#include "posh/sym_addr.hpp"

namespace posh {

/// Writes `nbytes` from private memory into `dest` on PE `pe`. Complete on
/// return; other PEs are guaranteed to see it after a synchronization.
template <class Strategy = copy::Active>
void put(const Heap& heap, int pe, SymAddr dest, const void* src, std::size_t nbytes) {
  if (nbytes == 0) return;
  if constexpr (kSafeMode) heap.check_range(pe, dest, nbytes);
  Strategy::copy(heap.translate(dest, pe), src, nbytes);
}

/// Reads `nbytes` at `src` on PE `pe` into private memory.
template <class Strategy = copy::Active>
void get(const Heap& heap, void* dest, int pe, SymAddr src, std::size_t nbytes) {
  if (nbytes == 0) return;
  if constexpr (kSafeMode) heap.check_range(pe, src, nbytes);
  Strategy::copy(dest, heap.translate(src, pe), nbytes);
}

namespace detail {

template <class T>
void check_elem(const Heap& heap, int pe, SymAddr addr) {
  if constexpr (kSafeMode) {
    heap.check_range(pe, addr, sizeof(T));
    if (addr.offset() % alignof(T) != 0) {
      throw Error(ErrorCode::misaligned, "offset " + std::to_string(addr.offset()) + " is not aligned to " +
                                             std::to_string(alignof(T)));
    }
  }
}

}  // namespace detail

/// Single-element transfers. The per-type entry points below are thin
/// instantiations of these two templates.
template <class T>
void put_elem(const Heap& heap, int pe, SymAddr dest, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  detail::check_elem<T>(heap, pe, dest);
  std::memcpy(heap.translate(dest, pe), &value, sizeof(T));
}

template <class T>
T get_elem(const Heap& heap, int pe, SymAddr src) {
  static_assert(std::is_trivially_copyable_v<T>);
  detail::check_elem<T>(heap, pe, src);
  T value;
  std::memcpy(&value, heap.translate(src, pe), sizeof(T));
  return value;
}

#define POSH_ELEM_ENTRY_POINTS(type, suffix)                                                           \
  inline void put_##suffix(const Heap& heap, int pe, SymAddr dest, type value) {                        \
    put_elem<type>(heap, pe, dest, value);                                                              \
  }                                                                                                     \
  inline type get_##suffix(const Heap& heap, int pe, SymAddr src) { return get_elem<type>(heap, pe, src); }

POSH_ELEM_ENTRY_POINTS(short, short)
POSH_ELEM_ENTRY_POINTS(int, int)
POSH_ELEM_ENTRY_POINTS(long, long)
POSH_ELEM_ENTRY_POINTS(long long, longlong)
POSH_ELEM_ENTRY_POINTS(float, float)
POSH_ELEM_ENTRY_POINTS(double, double)
POSH_ELEM_ENTRY_POINTS(long double, longdouble)

#undef POSH_ELEM_ENTRY_POINTS

}  // namespace posh
