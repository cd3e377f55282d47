#include "posh/rte.hpp"

#include <fcntl.h>
#include <poll.h>
#include <pthread.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "posh/error.hpp"
#include "posh/shm_segment.hpp"

extern char** environ;

namespace posh::rte {

namespace {

constexpr std::array kRelayedSignals{SIGINT, SIGTERM, SIGHUP, SIGQUIT, SIGUSR1, SIGUSR2};

bool is_terminating(int sig) { return sig == SIGINT || sig == SIGTERM || sig == SIGHUP || sig == SIGQUIT; }

sigset_t relayed_set() {
  sigset_t set;
  sigemptyset(&set);
  for (int sig : kRelayedSignals) sigaddset(&set, sig);
  return set;
}

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      return;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Splits a child's stream into lines and writes each one with a rank prefix.
class LinePrefixer {
 public:
  LinePrefixer(int rank, int out_fd, std::mutex& mu) : prefix_(fmt::format("[{}] ", rank)), out_fd_(out_fd), mu_(mu) {}

  void feed(const char* data, std::size_t n) {
    pending_.append(data, n);
    std::size_t start = 0;
    for (std::size_t nl; (nl = pending_.find('\n', start)) != std::string::npos; start = nl + 1) {
      emit(std::string_view(pending_).substr(start, nl + 1 - start));
    }
    pending_.erase(0, start);
  }

  void flush() {
    if (pending_.empty()) return;
    pending_ += '\n';
    emit(pending_);
    pending_.clear();
  }

 private:
  void emit(std::string_view line) {
    std::string text = prefix_;
    text += line;
    std::lock_guard lock(mu_);
    write_all(out_fd_, text.data(), text.size());
  }

  std::string prefix_;
  int out_fd_;
  std::mutex& mu_;
  std::string pending_;
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    reset();
    fd_ = std::exchange(o.fd_, -1);
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw_errno("pipe2");
  return {Fd(fds[0]), Fd(fds[1])};
}

class Job {
 public:
  Job(const JobSpec& spec, std::string jobid) : spec_(spec), jobid_(std::move(jobid)) {
    children_.resize(static_cast<std::size_t>(spec.npes));
    for (int r = 0; r < spec.npes; ++r) children_[static_cast<std::size_t>(r)].rank = r;
  }

  JobResult run() {
    const sigset_t set = relayed_set();
    sigset_t previous;
    pthread_sigmask(SIG_BLOCK, &set, &previous);

    std::thread relay([&] { relay_signals(set); });
    std::vector<std::thread> workers;
    workers.reserve(children_.size());
    for (int r = 0; r < spec_.npes; ++r) workers.emplace_back([this, r] { supervise(r); });

    monitor();
    for (auto& w : workers) w.join();
    stop_relay_.store(true);
    relay.join();

    // Drain anything that arrived after the relay stopped so that unblocking
    // does not deliver it to the launcher itself.
    const timespec zero{0, 0};
    while (sigtimedwait(&set, nullptr, &zero) > 0) {
    }
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);

    for (int r = 0; r < spec_.npes; ++r) shm::Segment::remove(shm::segment_name(jobid_, r));
    return result();
  }

 private:
  // One supervisor per child: spawn it, pump its output in capture mode, and
  // record its terminal status exactly once.
  void supervise(int rank) {
    ChildRecord& rec = children_[static_cast<std::size_t>(rank)];
    std::vector<std::string> env_strings;
    for (char** e = environ; *e != nullptr; ++e) {
      if (std::strncmp(*e, "POSH_", 5) != 0) env_strings.emplace_back(*e);
    }
    for (auto& kv : child_environment(spec_, jobid_, rank)) env_strings.push_back(std::move(kv));
    std::vector<char*> envp;
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);
    std::vector<std::string> args = spec_.command;
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    argv.push_back(nullptr);

    Fd out_r, out_w, err_r, err_w, null_in;
    try {
      if (spec_.capture_io) {
        std::tie(out_r, out_w) = make_pipe();
        std::tie(err_r, err_w) = make_pipe();
      }
      if (rank != 0) {
        null_in = Fd(::open("/dev/null", O_RDONLY | O_CLOEXEC));
        if (null_in.get() < 0) throw_errno("open /dev/null");
      }
    } catch (const std::exception& e) {
      spawn_failed(rank, e.what());
      return;
    }
    auto [status_r, status_w] = make_pipe();

    pid_t pid;
    {
      std::unique_lock lock(mu_);
      if (teardown_ || interrupted_) {
        ++finished_;
        cv_.notify_all();
        return;
      }
      pid = ::fork();
      if (pid == 0) {
        // Only async-signal-safe calls until exec.
        if (null_in.get() >= 0) ::dup2(null_in.get(), STDIN_FILENO);
        if (out_w.get() >= 0) ::dup2(out_w.get(), STDOUT_FILENO);
        if (err_w.get() >= 0) ::dup2(err_w.get(), STDERR_FILENO);
        sigset_t none;
        sigemptyset(&none);
        ::sigprocmask(SIG_SETMASK, &none, nullptr);
        ::execvpe(argv[0], argv.data(), envp.data());
        const int err = errno;
        (void)!::write(status_w.get(), &err, sizeof err);
        ::_exit(127);
      }
      if (pid < 0) {
        const int err = errno;
        lock.unlock();
        spawn_failed(rank, fmt::format("fork: {}", std::strerror(err)));
        return;
      }
      rec.pid = pid;
      rec.state = ChildState::running;
    }
    status_w.reset();
    out_w.reset();
    err_w.reset();

    int exec_errno = 0;
    ssize_t got;
    do {
      got = ::read(status_r.get(), &exec_errno, sizeof exec_errno);
    } while (got < 0 && errno == EINTR);
    const bool exec_failed = got == static_cast<ssize_t>(sizeof exec_errno);

    if (spec_.capture_io && !exec_failed) pump(rank, out_r.get(), err_r.get());

    siginfo_t info{};
    while (::waitid(P_PID, static_cast<id_t>(pid), &info, WEXITED | WNOWAIT) != 0 && errno == EINTR) {
    }
    std::lock_guard lock(mu_);
    if (info.si_code == CLD_EXITED) {
      rec.state = ChildState::exited;
      rec.code = info.si_status;
    } else {
      rec.state = ChildState::signaled;
      rec.code = info.si_status;
    }
    // Reap only now, under the lock, so a kill() issued while holding it can
    // never reach a recycled pid.
    ::waitpid(pid, nullptr, 0);
    ++finished_;
    if (exec_failed) {
      launcher_error_ = true;
      messages_ += fmt::format("poshrun: cannot execute '{}' for rank {}: {}\n", spec_.command[0], rank,
                               std::strerror(exec_errno));
      request_teardown(rank);
    } else if (!(rec.state == ChildState::exited && rec.code == 0)) {
      request_teardown(rank);
    }
    cv_.notify_all();
  }

  void pump(int rank, int out_fd, int err_fd) {
    LinePrefixer out(rank, STDOUT_FILENO, out_mu_);
    LinePrefixer err(rank, STDERR_FILENO, out_mu_);
    std::array<pollfd, 2> fds{pollfd{out_fd, POLLIN, 0}, pollfd{err_fd, POLLIN, 0}};
    std::array<LinePrefixer*, 2> sinks{&out, &err};
    int open = 2;
    char buf[4096];
    while (open > 0) {
      if (::poll(fds.data(), fds.size(), -1) < 0) {
        if (errno == EINTR) continue;
        break;
      }
      for (std::size_t i = 0; i < fds.size(); ++i) {
        if (fds[i].fd < 0 || fds[i].revents == 0) continue;
        const ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
        if (n > 0) {
          sinks[i]->feed(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EINTR) {
          sinks[i]->flush();
          fds[i].fd = -1;
          --open;
        }
      }
    }
  }

  void spawn_failed(int rank, const std::string& why) {
    std::lock_guard lock(mu_);
    launcher_error_ = true;
    messages_ += fmt::format("poshrun: failed to start rank {}: {}\n", rank, why);
    ++finished_;
    request_teardown(rank);
    cv_.notify_all();
  }

  // Caller holds mu_.
  void request_teardown(int rank) {
    if (first_failure_ < 0) first_failure_ = rank;
    teardown_ = true;
  }

  // Caller holds mu_.
  void kill_running(int sig) {
    for (auto& c : children_) {
      if (c.state == ChildState::running) ::kill(c.pid, sig);
    }
  }

  void monitor() {
    std::unique_lock lock(mu_);
    const auto all_done = [&] { return finished_ == spec_.npes; };
    cv_.wait(lock, [&] { return all_done() || teardown_; });
    if (all_done()) return;
    kill_running(SIGTERM);
    if (!cv_.wait_for(lock, spec_.kill_grace, all_done)) {
      kill_running(SIGKILL);
      cv_.wait(lock, all_done);
    }
  }

  void relay_signals(const sigset_t& set) {
    const timespec tick{0, 20'000'000};
    while (!stop_relay_.load()) {
      const int sig = ::sigtimedwait(&set, nullptr, &tick);
      if (sig <= 0) continue;
      std::lock_guard lock(mu_);
      relayed_.push_back(sig);
      kill_running(sig);
      // No new children after an interrupt. Unlike a failure this does not
      // escalate: running children decide how to react and are waited for.
      if (is_terminating(sig)) interrupted_ = true;
    }
  }

  JobResult result() {
    JobResult res;
    res.jobid = jobid_;
    res.children = children_;
    res.first_failure = first_failure_;
    res.relayed_signals = relayed_;
    if (!messages_.empty()) write_all(STDERR_FILENO, messages_.data(), messages_.size());
    bool all_ok = true;
    for (const auto& c : children_) all_ok = all_ok && c.state == ChildState::exited && c.code == 0;
    res.exit_code = launcher_error_ ? kExitLauncherError : all_ok ? kExitSuccess : kExitChildFailure;
    return res;
  }

  const JobSpec& spec_;
  std::string jobid_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<ChildRecord> children_;
  int finished_ = 0;
  bool teardown_ = false;
  bool interrupted_ = false;
  bool launcher_error_ = false;
  int first_failure_ = -1;
  std::vector<int> relayed_;
  std::string messages_;
  std::atomic<bool> stop_relay_{false};
  std::mutex out_mu_;
};

}  // namespace

std::string generate_jobid() {
  std::random_device rd;
  return fmt::format("{:x}r{:08x}", static_cast<unsigned>(::getpid()), rd());
}

std::vector<std::string> child_environment(const JobSpec& spec, const std::string& jobid, int rank) {
  std::vector<std::string> env{
      fmt::format("{}={}", env::kRank, rank),
      fmt::format("{}={}", env::kNpes, spec.npes),
      fmt::format("{}={}", env::kJobId, jobid),
      fmt::format("{}={}", env::kHeapSize, spec.heap_size),
      fmt::format("{}={}", env::kDebug, spec.debug ? 1 : 0),
      fmt::format("{}={}", env::kSafe, spec.safe ? 1 : 0),
  };
  if (spec.debug_hold_rank) env.push_back(fmt::format("{}={}", env::kDebugHoldRank, *spec.debug_hold_rank));
  if (!spec.coll_algo.empty()) env.push_back(fmt::format("{}={}", env::kCollAlgo, spec.coll_algo));
  return env;
}

JobResult launch(const JobSpec& spec) {
  if (spec.npes < 1) throw Error(ErrorCode::invalid_argument, "npes must be at least 1");
  if (spec.command.empty() || spec.command[0].empty()) throw Error(ErrorCode::invalid_argument, "no program given");
  if (spec.debug_hold_rank && (*spec.debug_hold_rank < 0 || *spec.debug_hold_rank >= spec.npes)) {
    throw Error(ErrorCode::invalid_argument, fmt::format("debug-hold rank {} is outside 0..{}", *spec.debug_hold_rank,
                                                         spec.npes - 1));
  }
  Job job(spec, spec.jobid.empty() ? generate_jobid() : spec.jobid);
  return job.run();
}

std::string describe_failures(const JobResult& result) {
  std::string text;
  for (const auto& c : result.children) {
    const char* tag = c.rank == result.first_failure ? "" : " (terminated)";
    if (c.state == ChildState::exited && c.code != 0) {
      text += fmt::format("rank {} (pid {}) exited with code {}{}\n", c.rank, c.pid, c.code, tag);
    } else if (c.state == ChildState::signaled) {
      const char* name = sigabbrev_np(c.code);
      text += fmt::format("rank {} (pid {}) killed by SIG{}{}\n", c.rank, c.pid, name != nullptr ? name : "?", tag);
    } else if (c.state == ChildState::not_started) {
      text += fmt::format("rank {} was not started\n", c.rank);
    }
  }
  return text;
}

}  // namespace posh::rte
