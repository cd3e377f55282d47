#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posh {

enum class ErrorCode {
  invalid_argument,
  capacity_too_small,
  already_initialized,
  name_collision,
  attach_timeout,
  abi_mismatch,
  out_of_memory,
  symmetry_violation,
  invalid_free,
  out_of_bounds,
  misaligned,
  duplicate_label,
  init_epoch_closed,
  lock_not_held,
  lock_reentry,
  lock_table_full,
  collective_type_mismatch,
  collective_size_mismatch,
  collective_reentry,
  collective_protocol,
  staging_exhausted,
  not_in_collective,
  timeout,
  system,
};

std::string_view to_string(ErrorCode code) noexcept;
/// The enumerator spelled as in the source, e.g. "out_of_bounds".
std::string_view code_name(ErrorCode code) noexcept;

/// Every failure surfaced by the runtime. The code is stable and is what tests
/// and callers branch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Throws Error(system) carrying strerror(errno).
[[noreturn]] void throw_errno(std::string_view what);

}  // namespace posh
