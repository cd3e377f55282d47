#include "posh/copy.hpp"

#include <cstdint>
#include <cstring>

namespace posh::copy {

void SystemCopy::copy(void* dst, const void* src, std::size_t n) noexcept { std::memcpy(dst, src, n); }

__attribute__((optimize("no-tree-vectorize", "no-tree-loop-distribute-patterns"))) void ByteLoopCopy::copy(
    void* dst, const void* src, std::size_t n) noexcept {
  auto* d = static_cast<unsigned char*>(dst);
  const auto* s = static_cast<const unsigned char*>(src);
  for (std::size_t i = 0; i < n; ++i) d[i] = s[i];
}

namespace {

using Vec = unsigned char __attribute__((vector_size(16)));
using UnalignedVec = unsigned char __attribute__((vector_size(16), aligned(1)));

}  // namespace

__attribute__((optimize("no-tree-loop-distribute-patterns"))) void WideBlockCopy::copy(
    void* dst, const void* src, std::size_t n) noexcept {
  auto* d = static_cast<unsigned char*>(dst);
  const auto* s = static_cast<const unsigned char*>(src);
  if (n >= 64) {
    const std::size_t head = (16 - reinterpret_cast<std::uintptr_t>(d) % 16) % 16;
    for (std::size_t i = 0; i < head; ++i) d[i] = s[i];
    d += head;
    s += head;
    n -= head;
    for (; n >= 64; n -= 64, d += 64, s += 64) {
      const UnalignedVec* in = reinterpret_cast<const UnalignedVec*>(s);
      const Vec a = in[0], b = in[1], c = in[2], e = in[3];
      Vec* out = reinterpret_cast<Vec*>(d);
      out[0] = a;
      out[1] = b;
      out[2] = c;
      out[3] = e;
    }
  }
  for (; n >= 16; n -= 16, d += 16, s += 16) {
    *reinterpret_cast<UnalignedVec*>(d) = *reinterpret_cast<const UnalignedVec*>(s);
  }
  for (std::size_t i = 0; i < n; ++i) d[i] = s[i];
}

std::string_view name(Strategy s) noexcept {
  return dispatch(s, [](auto impl) { return decltype(impl)::name; });
}

std::optional<Strategy> parse_strategy(std::string_view text) noexcept {
  for (const Strategy s : kAllStrategies) {
    if (name(s) == text) return s;
  }
  return std::nullopt;
}

CopyFn function_for(Strategy s) noexcept {
  return dispatch(s, [](auto impl) -> CopyFn { return &decltype(impl)::copy; });
}

}  // namespace posh::copy
