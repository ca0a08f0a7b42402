#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nodefail {

/// Trace time: integer microseconds since trace start.
using Micros = std::int64_t;

inline constexpr Micros kSecond = 1'000'000;
inline constexpr Micros kMinute = 60 * kSecond;
inline constexpr Micros kHour = 60 * kMinute;
inline constexpr Micros kDay = 24 * kHour;

/// Bad input, bad configuration or a violated precondition that the caller
/// can fix. The CLI maps it to exit status 1; everything else maps to 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Progress and warnings go through a replaceable sink so tests can mute them.
using LogSink = std::function<void(std::string_view)>;

inline LogSink& log_sink() {
  static LogSink sink = [](std::string_view line) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << line << '\n';
  };
  return sink;
}

inline void log_line(std::string_view line) {
  if (auto& sink = log_sink()) sink(line);
}

inline void log_warning(std::string_view what) {
  log_line(std::string("warning: ").append(what));
}

/// FNV-1a, 64 bit. Stable across platforms; used for config hashes and
/// per-machine hashing.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace nodefail
