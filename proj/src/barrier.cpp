#include "posh/barrier.hpp"

#include "posh/build_config.hpp"
#include "posh/descriptor.hpp"
#include "posh/wait.hpp"

namespace posh {

void Barrier::wait(std::span<const HeapSegment> table, int rank, std::uint64_t seq) {
  const int n = static_cast<int>(table.size());
  if (n == 1) return;
  BarrierCells& mine = table[static_cast<std::size_t>(rank)].header().barrier;
  int round = 0;
  for (int dist = 1; dist < n; dist <<= 1, ++round) {
    const int to = (rank + dist) % n;
    const int from = (rank - dist + n) % n;
    table[static_cast<std::size_t>(to)].header().barrier.flags[parity_][round].store(sense_,
                                                                                   std::memory_order_release);
    AtomicU32& flag = mine.flags[parity_][round];
    wait_until([&] { return flag.load(std::memory_order_acquire) == sense_; }, "barrier",
               [&] {
                 if constexpr (kSafeMode) {
                   check_peer(table[static_cast<std::size_t>(from)].descriptor(), from, rank, seq, CollType::barrier,
                              0, 0);
                 }
               });
  }
  if (parity_ == 1) sense_ ^= 1;
  parity_ ^= 1;
}

}  // namespace posh
