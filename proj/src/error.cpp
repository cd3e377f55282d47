#include "posh/error.hpp"

#include <cerrno>
#include <cstring>

namespace posh {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::capacity_too_small: return "capacity too small";
    case ErrorCode::already_initialized: return "already initialized";
    case ErrorCode::name_collision: return "segment name collision";
    case ErrorCode::attach_timeout: return "attach timeout";
    case ErrorCode::abi_mismatch: return "ABI mismatch";
    case ErrorCode::out_of_memory: return "symmetric heap exhausted";
    case ErrorCode::symmetry_violation: return "symmetry violation";
    case ErrorCode::invalid_free: return "invalid free";
    case ErrorCode::out_of_bounds: return "out of bounds";
    case ErrorCode::misaligned: return "misaligned address";
    case ErrorCode::duplicate_label: return "duplicate label";
    case ErrorCode::init_epoch_closed: return "init epoch closed";
    case ErrorCode::lock_not_held: return "lock not held";
    case ErrorCode::lock_reentry: return "lock re-entry";
    case ErrorCode::lock_table_full: return "lock table full";
    case ErrorCode::collective_type_mismatch: return "collective type mismatch";
    case ErrorCode::collective_size_mismatch: return "collective size mismatch";
    case ErrorCode::collective_reentry: return "collective re-entry";
    case ErrorCode::collective_protocol: return "collective protocol error";
    case ErrorCode::staging_exhausted: return "staging region exhausted";
    case ErrorCode::not_in_collective: return "not in a collective";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::system: return "system error";
  }
  return "unknown";
}

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::capacity_too_small: return "capacity_too_small";
    case ErrorCode::already_initialized: return "already_initialized";
    case ErrorCode::name_collision: return "name_collision";
    case ErrorCode::attach_timeout: return "attach_timeout";
    case ErrorCode::abi_mismatch: return "abi_mismatch";
    case ErrorCode::out_of_memory: return "out_of_memory";
    case ErrorCode::symmetry_violation: return "symmetry_violation";
    case ErrorCode::invalid_free: return "invalid_free";
    case ErrorCode::out_of_bounds: return "out_of_bounds";
    case ErrorCode::misaligned: return "misaligned";
    case ErrorCode::duplicate_label: return "duplicate_label";
    case ErrorCode::init_epoch_closed: return "init_epoch_closed";
    case ErrorCode::lock_not_held: return "lock_not_held";
    case ErrorCode::lock_reentry: return "lock_reentry";
    case ErrorCode::lock_table_full: return "lock_table_full";
    case ErrorCode::collective_type_mismatch: return "collective_type_mismatch";
    case ErrorCode::collective_size_mismatch: return "collective_size_mismatch";
    case ErrorCode::collective_reentry: return "collective_reentry";
    case ErrorCode::collective_protocol: return "collective_protocol";
    case ErrorCode::staging_exhausted: return "staging_exhausted";
    case ErrorCode::not_in_collective: return "not_in_collective";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::system: return "system";
  }
  return "unknown";
}

void throw_errno(std::string_view what) {
  const int err = errno;
  throw Error(ErrorCode::system, std::string(what) + ": " + std::strerror(err));
}

}  // namespace posh
