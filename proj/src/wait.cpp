#include "posh/wait.hpp"

#include <sched.h>

#include <algorithm>
#include <string>
#include <thread>

namespace posh {

namespace {

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#elif defined(__aarch64__)
  asm volatile("yield");
#endif
}

constexpr std::uint32_t kYieldRounds = 64;
constexpr auto kFirstSleep = std::chrono::microseconds(5);
constexpr auto kMaxSleep = std::chrono::microseconds(500);

}  // namespace

// Spinning only helps when another core can make progress meanwhile.
Backoff::Backoff() : spin_limit_(std::thread::hardware_concurrency() > 1 ? 128 : 0) {}

void Backoff::pause() {
  ++iterations_;
  if (iterations_ <= spin_limit_) {
    cpu_relax();
  } else if (iterations_ <= spin_limit_ + kYieldRounds) {
    sched_yield();
  } else {
    sleep_ = sleep_.count() == 0 ? std::chrono::nanoseconds(kFirstSleep)
                                 : std::min<std::chrono::nanoseconds>(sleep_ * 2, kMaxSleep);
    std::this_thread::sleep_for(sleep_);
  }
}

namespace detail {

void watchdog_expired(std::string_view what) {
  throw Error(ErrorCode::timeout, "watchdog expired while waiting for " + std::string(what));
}

}  // namespace detail

}  // namespace posh
