#include "posh/shm_segment.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <utility>

#include "posh/error.hpp"

namespace posh::shm {

namespace {

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

std::byte* map(int fd, std::size_t size, const std::string& name) {
  void* p = ::mmap(nullptr, size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  if (p == MAP_FAILED) throw_errno("mmap " + name);
  return static_cast<std::byte*>(p);
}

}  // namespace

std::string segment_name(std::string_view jobid, int rank) {
  std::string name = "/";
  name += kNameBase;
  name += '-';
  name += jobid;
  name += '-';
  name += std::to_string(rank);
  return name;
}

std::optional<Segment> Segment::create(const std::string& name, std::size_t size) {
  Fd fd(::shm_open(name.c_str(), O_CREAT | O_EXCL | O_RDWR, 0600));
  if (fd.get() < 0) {
    if (errno == EEXIST) return std::nullopt;
    throw_errno("shm_open(create) " + name);
  }
  if (::ftruncate(fd.get(), static_cast<off_t>(size)) != 0) {
    const int err = errno;
    ::shm_unlink(name.c_str());
    errno = err;
    throw_errno("ftruncate " + name);
  }
  try {
    return Segment(name, map(fd.get(), size, name), size);
  } catch (...) {
    ::shm_unlink(name.c_str());
    throw;
  }
}

std::optional<Segment> Segment::open(const std::string& name) {
  Fd fd(::shm_open(name.c_str(), O_RDWR, 0600));
  if (fd.get() < 0) {
    if (errno == ENOENT) return std::nullopt;
    throw_errno("shm_open " + name);
  }
  struct stat st {};
  if (::fstat(fd.get(), &st) != 0) throw_errno("fstat " + name);
  if (st.st_size <= 0) return std::nullopt;
  const auto size = static_cast<std::size_t>(st.st_size);
  return Segment(name, map(fd.get(), size, name), size);
}

bool Segment::remove(const std::string& name) { return ::shm_unlink(name.c_str()) == 0; }

bool Segment::exists(const std::string& name) {
  const int fd = ::shm_open(name.c_str(), O_RDONLY, 0);
  if (fd < 0) return false;
  ::close(fd);
  return true;
}

Segment::Segment(Segment&& other) noexcept
    : name_(std::move(other.name_)),
      base_(std::exchange(other.base_, nullptr)),
      size_(std::exchange(other.size_, 0)) {}

Segment& Segment::operator=(Segment&& other) noexcept {
  if (this != &other) {
    release();
    name_ = std::move(other.name_);
    base_ = std::exchange(other.base_, nullptr);
    size_ = std::exchange(other.size_, 0);
  }
  return *this;
}

Segment::~Segment() { release(); }

void Segment::release() noexcept {
  if (base_ != nullptr) ::munmap(base_, size_);
  base_ = nullptr;
  size_ = 0;
}

}  // namespace posh::shm
