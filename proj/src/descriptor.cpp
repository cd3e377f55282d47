#include "posh/descriptor.hpp"

#include <string>

#include "posh/build_config.hpp"
#include "posh/error.hpp"
#include "posh/lock_word.hpp"

namespace posh {

namespace {

constexpr auto relaxed = std::memory_order_relaxed;

DescriptorSnapshot read_fields(const CollectiveDescriptor& d) {
  DescriptorSnapshot s;
  s.in_progress = d.in_progress.load(relaxed) != 0;
  s.entered = d.entered.load(relaxed) != 0;
  s.ctype = static_cast<CollType>(d.ctype.load(relaxed));
  s.seq = d.seq.load(relaxed);
  s.done_seq = d.done_seq.load(relaxed);
  s.buf = d.buf.load(relaxed);
  s.counter = d.counter.load(relaxed);
  s.size = d.size.load(relaxed);
  s.args = d.args.load(relaxed);
  s.init_count = d.init_count.load(relaxed);
  return s;
}

void compare(const DescriptorSnapshot& theirs, int their_rank, int my_rank, std::uint64_t seq, CollType type,
             std::uint64_t size, std::uint64_t args) {
  const std::string other = their_rank < 0 ? "the PE that initialized it" : "PE " + std::to_string(their_rank);
  const std::string where = " (instance " + std::to_string(seq) + ", PE " + std::to_string(my_rank) + " vs " + other + ")";
  if (theirs.ctype != type) {
    throw Error(ErrorCode::collective_type_mismatch,
                std::string(to_string(type)) + " meets " + std::string(to_string(theirs.ctype)) + where);
  }
  if (theirs.size != size) {
    throw Error(ErrorCode::collective_size_mismatch,
                std::to_string(size) + " bytes vs " + std::to_string(theirs.size) + " bytes" + where);
  }
  if (theirs.args != args) {
    throw Error(ErrorCode::collective_type_mismatch, "arguments differ (root or operator)" + where);
  }
}

}  // namespace

std::string_view to_string(CollType type) noexcept {
  switch (type) {
    case CollType::none: return "none";
    case CollType::barrier: return "barrier";
    case CollType::broadcast: return "broadcast";
    case CollType::reduce: return "reduce";
  }
  return "unknown";
}

DescriptorSnapshot snapshot(CollectiveDescriptor& desc, int my_rank) {
  LockWordGuard guard(desc.lock, my_rank);
  return read_fields(desc);
}

bool enter_collective(CollectiveDescriptor& desc, int my_rank, std::uint64_t seq, CollType type, std::uint64_t size,
                      std::uint64_t args, std::uint64_t landing) {
  LockWordGuard guard(desc.lock, my_rank);
  if constexpr (kSafeMode) {
    if (desc.entered.load(relaxed) != 0) {
      throw Error(ErrorCode::collective_reentry, "PE " + std::to_string(my_rank) +
                                                     " is already participating in another collective");
    }
  }
  const bool early = desc.in_progress.load(relaxed) != 0;
  if (early) {
    const std::uint64_t theirs = desc.seq.load(relaxed);
    if (theirs != seq) {
      throw Error(ErrorCode::collective_protocol, "descriptor of PE " + std::to_string(my_rank) +
                                                      " was initialized for instance " + std::to_string(theirs) +
                                                      " while entering " + std::to_string(seq));
    }
    if constexpr (kSafeMode) {
      try {
        compare(read_fields(desc), -1, my_rank, seq, type, size, args);
      } catch (const Error&) {
        // Publish our own view so the peer that initialized us detects the
        // mismatch as well instead of waiting for us forever.
        desc.ctype.store(static_cast<std::uint32_t>(type), relaxed);
        desc.size.store(size, relaxed);
        desc.args.store(args, relaxed);
        throw;
      }
    }
  } else {
    desc.seq.store(seq, relaxed);
    desc.ctype.store(static_cast<std::uint32_t>(type), relaxed);
    desc.size.store(size, relaxed);
    desc.args.store(args, relaxed);
    desc.init_count.fetch_add(1, relaxed);
    desc.in_progress.store(1, relaxed);
  }
  desc.buf.store(landing, relaxed);
  desc.entered.store(1, std::memory_order_release);
  return early;
}

std::uint64_t leave_collective(CollectiveDescriptor& desc, int my_rank, int npes, std::uint64_t seq) {
  LockWordGuard guard(desc.lock, my_rank);
  const std::uint64_t inits = desc.init_count.load(relaxed);
  desc.in_progress.store(0, relaxed);
  desc.entered.store(0, relaxed);
  desc.ctype.store(static_cast<std::uint32_t>(CollType::none), relaxed);
  desc.buf.store(0, relaxed);
  desc.counter.store(0, relaxed);
  desc.size.store(0, relaxed);
  desc.args.store(0, relaxed);
  desc.init_count.store(0, relaxed);
  for (int i = 0; i < npes; ++i) {
    DepositSlot& slot = desc.slots[i];
    slot.state.store(static_cast<std::uint32_t>(SlotState::empty), relaxed);
    slot.from.store(0, relaxed);
    slot.handle.store(0, relaxed);
    slot.nbytes.store(0, relaxed);
  }
  desc.done_seq.store(seq, std::memory_order_release);
  return inits;
}

Arrival arrive(CollectiveDescriptor& target, int target_rank, int my_rank, std::uint64_t seq, CollType type,
               std::uint64_t size, std::uint64_t args, int slot, std::uint64_t handle_offset) {
  LockWordGuard guard(target.lock, my_rank);
  Arrival result;
  if (target.in_progress.load(relaxed) == 0) {
    target.seq.store(seq, relaxed);
    target.ctype.store(static_cast<std::uint32_t>(type), relaxed);
    target.size.store(size, relaxed);
    target.args.store(args, relaxed);
    target.init_count.fetch_add(1, relaxed);
    target.in_progress.store(1, relaxed);
    result.initialized_remotely = true;
  } else {
    const std::uint64_t theirs = target.seq.load(relaxed);
    if (theirs != seq) {
      throw Error(ErrorCode::collective_protocol, "descriptor of PE " + std::to_string(target_rank) +
                                                      " describes instance " + std::to_string(theirs) + ", PE " +
                                                      std::to_string(my_rank) + " is in " + std::to_string(seq));
    }
    if constexpr (kSafeMode) compare(read_fields(target), target_rank, my_rank, seq, type, size, args);
  }

  DepositSlot& s = target.slots[slot];
  if constexpr (kSafeMode) {
    if (s.state.load(relaxed) != static_cast<std::uint32_t>(SlotState::empty)) {
      throw Error(ErrorCode::collective_protocol, "slot " + std::to_string(slot) + " of PE " +
                                                      std::to_string(target_rank) + " filled twice in instance " +
                                                      std::to_string(seq));
    }
  }
  s.from.store(static_cast<std::uint32_t>(my_rank), relaxed);
  s.nbytes.store(size, relaxed);
  const std::uint64_t landing = target.buf.load(relaxed);
  if (target.entered.load(std::memory_order_acquire) != 0 && landing != 0) {
    result.direct = true;
    result.landing = landing;
    s.state.store(static_cast<std::uint32_t>(SlotState::writing), std::memory_order_release);
  } else {
    s.handle.store(handle_offset, relaxed);
    s.state.store(static_cast<std::uint32_t>(SlotState::handle), std::memory_order_release);
  }
  return result;
}

void check_peer(CollectiveDescriptor& peer, int peer_rank, int my_rank, std::uint64_t seq, CollType type,
                std::uint64_t size, std::uint64_t args) {
  const DescriptorSnapshot theirs = snapshot(peer, my_rank);
  if (theirs.in_progress && theirs.seq == seq) compare(theirs, peer_rank, my_rank, seq, type, size, args);
}

}  // namespace posh
