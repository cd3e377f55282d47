#include "posh/config.hpp"

#include <unistd.h>

#include <charconv>
#include <cstdlib>
#include <string_view>

#include "posh/error.hpp"

namespace posh {

namespace {

const char* get(const char* name) {
  const char* value = std::getenv(name);
  return value != nullptr && *value != '\0' ? value : nullptr;
}

int parse_int(const char* name, const char* text) {
  int value = 0;
  const std::string_view s(text);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::invalid_argument, std::string(name) + "='" + text + "' is not an integer");
  }
  return value;
}

bool parse_flag(const char* text) {
  const std::string_view s(text);
  return !(s == "0" || s == "false" || s == "no" || s == "off");
}

}  // namespace

std::size_t parse_size(const std::string& text) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr == text.data()) throw Error(ErrorCode::invalid_argument, "bad size '" + text + "'");
  std::string_view suffix(ptr, text.data() + text.size() - ptr);
  if (suffix.ends_with("iB")) suffix.remove_suffix(2);
  if (suffix.ends_with("B") && suffix.size() > 1) suffix.remove_suffix(1);
  std::size_t scale = 1;
  if (suffix.empty() || suffix == "B") {
  } else if (suffix == "K" || suffix == "k") {
    scale = std::size_t{1} << 10;
  } else if (suffix == "M" || suffix == "m") {
    scale = std::size_t{1} << 20;
  } else if (suffix == "G" || suffix == "g") {
    scale = std::size_t{1} << 30;
  } else {
    throw Error(ErrorCode::invalid_argument, "bad size suffix in '" + text + "'");
  }
  return value * scale;
}

RuntimeConfig RuntimeConfig::from_env() {
  RuntimeConfig cfg;
  if (const char* v = get(env::kRank)) cfg.rank = parse_int(env::kRank, v);
  if (const char* v = get(env::kNpes)) cfg.npes = parse_int(env::kNpes, v);
  if (const char* v = get(env::kJobId)) {
    cfg.jobid = v;
  } else {
    cfg.jobid = "solo" + std::to_string(::getpid());
  }
  if (const char* v = get(env::kHeapSize)) cfg.heap_size = parse_size(v);
  if (const char* v = get(env::kDebug)) cfg.debug = parse_flag(v);
  if (const char* v = get(env::kSafe)) cfg.safe = parse_flag(v);
  if (const char* v = get(env::kDebugHoldRank)) cfg.debug_hold_rank = parse_int(env::kDebugHoldRank, v);
  if (const char* v = get(env::kCollAlgo)) cfg.coll_algo = v;
  return cfg;
}

}  // namespace posh
