#pragma once

#include <cstdint>
#include <span>

#include "posh/heap_segment.hpp"

namespace posh {

/// Sense-reversing dissemination barrier over flag cells in each heap's
/// header. Round k signals PE (rank + 2^k) mod n and waits for PE
/// (rank - 2^k) mod n; two parity sets let back-to-back barriers reuse the
/// cells without a reset.
class Barrier {
 public:
  /// `seq` identifies the instance for safe-mode peer checks.
  void wait(std::span<const HeapSegment> table, int rank, std::uint64_t seq);

 private:
  std::uint32_t parity_ = 0;
  std::uint32_t sense_ = 1;
};

}  // namespace posh
