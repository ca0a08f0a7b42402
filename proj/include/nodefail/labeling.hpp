#pragma once

// Failure identification, SAFE/FAIL classes and SAFE subsampling.
//
// A REMOVE is a confirmed failure when the machine stays down for at least
// the threshold (or never returns). A row at epoch end t gets:
//   dropped  if any non-failure REMOVE of its machine lies in (t, t + horizon)
//   FAIL     else if the next REMOVE is a failure less than horizon away
//   SAFE     otherwise

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nodefail/common.hpp"
#include "nodefail/features.hpp"
#include "nodefail/rng.hpp"
#include "nodefail/trace.hpp"

namespace nodefail {

enum class PointClass : std::uint8_t { Safe = 0, Fail = 1 };

inline constexpr std::int64_t kNone = -1;

struct FailureEvent {
  std::string machine_id;
  Micros remove_ts = 0;
  std::optional<Micros> next_add_ts;
  std::optional<Micros> down_time;  // nullopt: unbounded
  bool is_failure = false;

  bool operator==(const FailureEvent&) const = default;
};

struct LabelParams {
  Micros downtime_threshold = 2 * kHour;
  Micros horizon = 24 * kHour;
};

/// One record per accepted REMOVE, in (machine, time) order. REMOVEs that do
/// not follow an ADD of the same machine are skipped with a warning.
inline std::vector<FailureEvent> identify_failures(const std::vector<MachineEvent>& events,
                                                   Micros threshold = 2 * kHour) {
  std::vector<FailureEvent> out;
  std::size_t skipped = 0;
  for (const auto& [id, h] : machine_histories(events)) {
    skipped += h.violations;
    for (const auto& d : h.down) {
      FailureEvent f{id, d.remove, d.add, std::nullopt, true};
      if (d.add) {
        f.down_time = *d.add - d.remove;
        f.is_failure = *f.down_time >= threshold;
      }
      out.push_back(std::move(f));
    }
  }
  if (skipped) log_warning(std::to_string(skipped) + " ADD/REMOVE events out of alternation were skipped");
  return out;
}

/// Removals of one machine in time order, for row labeling.
struct RemovalSchedule {
  std::vector<Micros> times;
  std::vector<std::uint8_t> failure;
};

inline std::map<std::string, RemovalSchedule> removal_schedules(const std::vector<FailureEvent>& events) {
  std::map<std::string, RemovalSchedule> out;
  for (const auto& e : events) {
    auto& s = out[e.machine_id];
    s.times.push_back(e.remove_ts);
    s.failure.push_back(e.is_failure);
  }
  for (auto& [id, s] : out) {
    std::vector<std::size_t> order(s.times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.times[a] < s.times[b]; });
    RemovalSchedule sorted;
    for (auto i : order) {
      sorted.times.push_back(s.times[i]);
      sorted.failure.push_back(s.failure[i]);
    }
    s = std::move(sorted);
  }
  return out;
}

struct RowLabel {
  bool keep = false;
  PointClass cls = PointClass::Safe;
  std::int64_t time_to_remove_us = kNone;   // next REMOVE of any cause
  std::int64_t time_to_failure_us = kNone;  // next confirmed failure
};

inline RowLabel label_row(Micros t, const RemovalSchedule& s, Micros horizon) {
  RowLabel r;
  const auto first = std::upper_bound(s.times.begin(), s.times.end(), t);
  std::size_t i = static_cast<std::size_t>(first - s.times.begin());
  if (i < s.times.size()) r.time_to_remove_us = s.times[i] - t;
  for (std::size_t j = i; j < s.times.size(); ++j) {
    if (!s.failure[j] && s.times[j] - t < horizon) return r;
    if (s.failure[j] && r.time_to_failure_us == kNone) r.time_to_failure_us = s.times[j] - t;
    if (s.times[j] - t >= horizon && r.time_to_failure_us != kNone) break;
  }
  r.keep = true;
  if (i < s.times.size() && s.failure[i] && r.time_to_remove_us < horizon) r.cls = PointClass::Fail;
  return r;
}

/// Labels the rows of one block in place and drops scrubbed rows.
inline void assign_classes(FeatureBlock& block, const RemovalSchedule* schedule, const EpochGrid& grid,
                           Micros horizon = 24 * kHour) {
  static const RemovalSchedule kEmpty;
  const RemovalSchedule& s = schedule ? *schedule : kEmpty;
  const std::size_t cols = block.rows() ? block.values.size() / block.rows() : 0;
  const std::size_t nw = block.rows() ? block.coverage.size() / block.rows() : 0;
  FeatureBlock out;
  out.machine = block.machine;
  for (std::size_t r = 0; r < block.rows(); ++r) {
    const RowLabel l = label_row(grid.end_of(block.epochs[r]), s, horizon);
    if (!l.keep) continue;
    out.epochs.push_back(block.epochs[r]);
    out.values.insert(out.values.end(), block.values.begin() + r * cols, block.values.begin() + (r + 1) * cols);
    out.coverage.insert(out.coverage.end(), block.coverage.begin() + r * nw, block.coverage.begin() + (r + 1) * nw);
    out.classes.push_back(static_cast<std::uint8_t>(l.cls));
    out.time_to_remove_us.push_back(l.time_to_remove_us);
    out.time_to_failure_us.push_back(l.time_to_failure_us);
  }
  block = std::move(out);
}

inline void check_subsample_rate(double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw InputError("subsample rate must lie in (0, 1]");
}

/// Keep decision for a SAFE point; a pure function of (seed, machine, epoch)
/// so the result is independent of processing order.
inline bool keep_safe_point(std::uint64_t seed, std::string_view machine_id, std::int32_t epoch, double rate) {
  if (rate >= 1.0) return true;
  const std::uint64_t h =
      derive_seed(derive_seed(seed, fnv1a(machine_id)), static_cast<std::uint64_t>(static_cast<std::uint32_t>(epoch)));
  return unit_from_bits(h) < rate;
}

/// Keeps every FAIL row and each SAFE row independently with probability rate.
inline void subsample_safe(FeatureBlock& block, std::string_view machine_id, double rate, std::uint64_t seed) {
  check_subsample_rate(rate);
  if (rate >= 1.0) return;
  const std::size_t rows = block.rows();
  const std::size_t cols = rows ? block.values.size() / rows : 0;
  const std::size_t nw = rows ? block.coverage.size() / rows : 0;
  std::size_t w = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const bool keep = block.classes[r] == static_cast<std::uint8_t>(PointClass::Fail) ||
                      keep_safe_point(seed, machine_id, block.epochs[r], rate);
    if (!keep) continue;
    if (w != r) {
      block.epochs[w] = block.epochs[r];
      std::copy_n(block.values.begin() + r * cols, cols, block.values.begin() + w * cols);
      std::copy_n(block.coverage.begin() + r * nw, nw, block.coverage.begin() + w * nw);
      block.classes[w] = block.classes[r];
      block.time_to_remove_us[w] = block.time_to_remove_us[r];
      block.time_to_failure_us[w] = block.time_to_failure_us[r];
    }
    ++w;
  }
  block.epochs.resize(w);
  block.values.resize(w * cols);
  block.coverage.resize(w * nw);
  block.classes.resize(w);
  block.time_to_remove_us.resize(w);
  block.time_to_failure_us.resize(w);
}

/// Labels every block of a matrix in place using the trace's machine events.
inline void label_matrix(FeatureMatrix& m, const std::vector<FailureEvent>& failures, const LabelParams& p = {}) {
  const auto schedules = removal_schedules(failures);
  const EpochGrid grid{m.meta.epoch_length, m.meta.n_epochs};
  for (auto& b : m.blocks) {
    auto it = schedules.find(m.meta.machines.at(b.machine));
    assign_classes(b, it == schedules.end() ? nullptr : &it->second, grid, p.horizon);
  }
}

inline void subsample_matrix(FeatureMatrix& m, double rate, std::uint64_t seed) {
  check_subsample_rate(rate);
  for (auto& b : m.blocks) subsample_safe(b, m.meta.machines.at(b.machine), rate, seed);
}

}  // namespace nodefail
