#pragma once

// Shared fixtures for the unit tests: log muting, scratch directories and
// small trace builders.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <string>
#include <vector>

#include "nodefail/nodefail.hpp"

namespace nodefail::testing {

class MuteLog {
 public:
  MuteLog() : saved_(log_sink()) { log_sink() = nullptr; }
  ~MuteLog() { log_sink() = saved_; }
  MuteLog(const MuteLog&) = delete;
  MuteLog& operator=(const MuteLog&) = delete;

 private:
  LogSink saved_;
};

/// Collects log lines instead of printing them.
class CaptureLog {
 public:
  CaptureLog() : saved_(log_sink()) {
    log_sink() = [this](std::string_view l) { lines.emplace_back(l); };
  }
  ~CaptureLog() { log_sink() = saved_; }
  CaptureLog(const CaptureLog&) = delete;
  CaptureLog& operator=(const CaptureLog&) = delete;

  std::vector<std::string> lines;

 private:
  LogSink saved_;
};

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("nodefail_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline MachineEvent add(Micros t, const std::string& m = "m1") { return {t, m, MachineEventType::Add}; }
inline MachineEvent remove(Micros t, const std::string& m = "m1") { return {t, m, MachineEventType::Remove}; }

inline TaskEvent task_event(Micros t, const std::string& job, std::int64_t idx, TaskEventType type,
                            const std::string& machine = "m1") {
  return {t, job, idx, type == TaskEventType::Submit ? std::string() : machine, type};
}

/// Row of a FeatureBlock with a single column, for labeling tests.
inline FeatureBlock single_column_block(std::uint32_t machine, std::vector<std::int32_t> epochs) {
  FeatureBlock b;
  b.machine = machine;
  for (auto e : epochs) {
    b.epochs.push_back(e);
    b.values.push_back(static_cast<float>(e));
    b.coverage.push_back(1.0f);
  }
  return b;
}

/// Runs a shell command and returns its exit status.
inline int run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  if (WIFEXITED(rc)) return WEXITSTATUS(rc);
  return -1;
}

}  // namespace nodefail::testing
