#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace posh::copy {

/// The C library memcpy.
struct SystemCopy {
  static constexpr std::string_view name = "default";
  static void copy(void* dst, const void* src, std::size_t n) noexcept;
};

/// One byte per iteration. The compiler is told not to vectorize it or turn
/// it back into a memcpy call.
struct ByteLoopCopy {
  static constexpr std::string_view name = "byteloop";
  static void copy(void* dst, const void* src, std::size_t n) noexcept;
};

/// 16-byte vector moves once the destination is aligned, scalar head and
/// tail.
struct WideBlockCopy {
  static constexpr std::string_view name = "wideblock";
  static void copy(void* dst, const void* src, std::size_t n) noexcept;
};

#if defined(POSH_COPY_STRATEGY_BYTELOOP)
using Active = ByteLoopCopy;
#elif defined(POSH_COPY_STRATEGY_WIDEBLOCK)
using Active = WideBlockCopy;
#else
using Active = SystemCopy;
#endif

enum class Strategy { system, byteloop, wideblock };

inline constexpr std::array<Strategy, 3> kAllStrategies = {Strategy::system, Strategy::byteloop, Strategy::wideblock};

std::string_view name(Strategy s) noexcept;
std::optional<Strategy> parse_strategy(std::string_view text) noexcept;

using CopyFn = void (*)(void*, const void*, std::size_t) noexcept;
CopyFn function_for(Strategy s) noexcept;

/// Calls `f` with a value of the strategy type matching `s`.
template <class F>
decltype(auto) dispatch(Strategy s, F&& f) {
  switch (s) {
    case Strategy::byteloop: return f(ByteLoopCopy{});
    case Strategy::wideblock: return f(WideBlockCopy{});
    case Strategy::system: break;
  }
  return f(SystemCopy{});
}

}  // namespace posh::copy
