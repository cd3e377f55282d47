#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace posh::shm {

inline constexpr std::string_view kNameBase = "posh";

/// "/posh-<jobid>-<rank>": a pure function of the job and the rank, so any PE
/// can find any other PE's heap knowing only its rank.
std::string segment_name(std::string_view jobid, int rank);

/// A mapped POSIX shared-memory object. Move-only; unmaps on destruction but
/// never unlinks implicitly.
class Segment {
 public:
  /// Creates and maps a new zero-filled object. Returns nullopt if the name
  /// is already taken; other failures throw.
  static std::optional<Segment> create(const std::string& name, std::size_t size);

  /// Maps an existing object. Returns nullopt if it does not exist yet or
  /// has not been sized by its creator.
  static std::optional<Segment> open(const std::string& name);

  /// shm_unlink; true if something was removed.
  static bool remove(const std::string& name);
  static bool exists(const std::string& name);

  Segment(Segment&& other) noexcept;
  Segment& operator=(Segment&& other) noexcept;
  Segment(const Segment&) = delete;
  Segment& operator=(const Segment&) = delete;
  ~Segment();

  std::byte* data() const { return base_; }
  std::size_t size() const { return size_; }
  const std::string& name() const { return name_; }

 private:
  Segment(std::string name, std::byte* base, std::size_t size) : name_(std::move(name)), base_(base), size_(size) {}
  void release() noexcept;

  std::string name_;
  std::byte* base_ = nullptr;
  std::size_t size_ = 0;
};

}  // namespace posh::shm
