#include "posh/layout.hpp"

#include <bit>

namespace posh {

std::uint32_t abi_tag() noexcept {
  const std::uint32_t endian = std::endian::native == std::endian::little ? 1 : 2;
  return static_cast<std::uint32_t>(sizeof(void*)) | (endian << 8) |
         (static_cast<std::uint32_t>(sizeof(long double)) << 16) | (kLayoutVersion << 24);
}

}  // namespace posh
