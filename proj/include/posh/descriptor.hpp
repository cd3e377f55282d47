#pragma once

#include <cstdint>

#include "posh/layout.hpp"

namespace posh {

/// Plain copy of a CollectiveDescriptor's scalar fields.
struct DescriptorSnapshot {
  bool in_progress = false;
  bool entered = false;
  CollType ctype = CollType::none;
  std::uint64_t seq = 0;
  std::uint64_t done_seq = 0;
  std::uint64_t buf = 0;
  std::uint64_t counter = 0;
  std::uint64_t size = 0;
  std::uint64_t args = 0;
  std::uint64_t init_count = 0;

  /// The state every descriptor returns to when its PE leaves a collective.
  bool is_reset() const {
    return !in_progress && !entered && ctype == CollType::none && buf == 0 && counter == 0 && size == 0 &&
           init_count == 0;
  }
};

/// Consistent snapshot taken under the descriptor lock.
DescriptorSnapshot snapshot(CollectiveDescriptor& desc, int my_rank);

/// Owner entry into instance `seq`. Initializes the descriptor unless an
/// early remote PE already did, publishes the landing buffer and marks the
/// owner as entered. Returns true when the descriptor had been initialized
/// remotely (early arrival).
bool enter_collective(CollectiveDescriptor& desc, int my_rank, std::uint64_t seq, CollType type, std::uint64_t size,
                      std::uint64_t args, std::uint64_t landing);

/// Resets the descriptor and records `seq` as completed. Returns how many
/// times the instance was initialized (1 when the protocol held).
std::uint64_t leave_collective(CollectiveDescriptor& desc, int my_rank, int npes, std::uint64_t seq);

/// Outcome of a sender reaching a peer's descriptor.
struct Arrival {
  bool initialized_remotely = false;  // the peer had not been initialized yet
  bool direct = false;                // slot reserved for writing into `landing`
  std::uint64_t landing = 0;          // peer's landing buffer when direct
};

/// Sender side of a transfer into `target`'s slot `slot` for instance `seq`.
/// Under the target's lock: initializes the descriptor if nobody has
/// (early arrival), checks it in safe mode, then either reserves the slot
/// for a direct write (target entered and published its landing buffer) or
/// leaves a handle to `handle_offset` in the sender's own heap. A direct
/// writer must finish with mark_delivered().
Arrival arrive(CollectiveDescriptor& target, int target_rank, int my_rank, std::uint64_t seq, CollType type,
               std::uint64_t size, std::uint64_t args, int slot, std::uint64_t handle_offset);

inline void mark_delivered(DepositSlot& slot) {
  slot.state.store(static_cast<std::uint32_t>(SlotState::delivered), std::memory_order_release);
}

/// Safe-mode consistency check against a peer taking part in instance `seq`:
/// throws on a differing operation type, transfer size or argument
/// fingerprint.
void check_peer(CollectiveDescriptor& peer, int peer_rank, int my_rank, std::uint64_t seq, CollType type,
                std::uint64_t size, std::uint64_t args);

std::string_view to_string(CollType type) noexcept;

}  // namespace posh
