#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>

namespace posh {

/// Location of a symmetric object, expressed as a byte offset from the start
/// of the owning heap. Because every PE performs the same sequence of
/// symmetric allocations against an identical deterministic allocator, the
/// same offset names the same object in every PE's heap, wherever each
/// process happens to map that heap.
class SymAddr {
 public:
  constexpr SymAddr() = default;
  constexpr explicit SymAddr(std::uint64_t offset) : offset_(offset) {}

  constexpr std::uint64_t offset() const { return offset_; }
  constexpr bool is_null() const { return offset_ == 0; }

  constexpr SymAddr operator+(std::uint64_t bytes) const { return SymAddr(offset_ + bytes); }

  friend constexpr auto operator<=>(SymAddr, SymAddr) = default;

 private:
  // Offset 0 lies inside the reserved header, so it never names user data.
  std::uint64_t offset_ = 0;
};

}  // namespace posh

template <>
struct std::hash<posh::SymAddr> {
  std::size_t operator()(posh::SymAddr a) const noexcept { return std::hash<std::uint64_t>{}(a.offset()); }
};
