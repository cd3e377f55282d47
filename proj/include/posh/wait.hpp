#pragma once

#include <chrono>
#include <cstdint>
#include <string_view>

#include "posh/build_config.hpp"
#include "posh/error.hpp"

namespace posh {

/// Escalating wait: a few CPU-relax spins, then yields, then short sleeps
/// doubling up to a cap. PEs are processes that may outnumber cores, so a
/// waiter must hand its time slice back quickly.
class Backoff {
 public:
  Backoff();
  void pause();
  std::uint64_t iterations() const { return iterations_; }

 private:
  std::uint64_t iterations_ = 0;
  std::uint32_t spin_limit_;
  std::chrono::nanoseconds sleep_{0};
};

namespace detail {
[[noreturn]] void watchdog_expired(std::string_view what);
inline constexpr auto kWatchdog = std::chrono::seconds(120);
}  // namespace detail

/// Waits until done() is true. `idle` runs every 64 pauses; it is where
/// safe-mode peer checks throw. Debug builds abort a wait that exceeds the
/// watchdog period instead of hanging forever.
template <class Done, class Idle>
void wait_until(Done&& done, std::string_view what, Idle&& idle) {
  if (done()) return;
  Backoff backoff;
  [[maybe_unused]] const auto start = std::chrono::steady_clock::now();
  while (!done()) {
    backoff.pause();
    if ((backoff.iterations() & 63) == 0) {
      idle();
      if constexpr (kDebugMode) {
        if (std::chrono::steady_clock::now() - start > detail::kWatchdog) detail::watchdog_expired(what);
      }
    }
  }
}

template <class Done>
void wait_until(Done&& done, std::string_view what) {
  wait_until(done, what, [] {});
}

}  // namespace posh
