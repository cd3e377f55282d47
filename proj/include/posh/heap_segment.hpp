#pragma once

#include <cstddef>
#include <string>

#include "posh/layout.hpp"

namespace posh {

/// One PE's segment as seen from this process.
struct HeapSegment {
  int rank = 0;
  std::string name;
  std::byte* base = nullptr;     // where this process mapped it
  std::size_t capacity = 0;      // symmetric heap bytes, header included
  std::size_t staging_size = 0;  // staging region following the heap

  SegmentHeader& header() const { return *reinterpret_cast<SegmentHeader*>(base); }
  CollectiveDescriptor& descriptor() const { return header().coll; }
  std::size_t usable_bytes() const { return capacity - kHeaderSize; }
};

}  // namespace posh
