#pragma once

// Per-(machine, epoch) feature construction.
//
// Epoch k ends at instant t_k = k * epoch_length and covers (t_{k-1}, t_k].
// A machine is available at epoch k when it is up at t_k. Row layout, in
// column order:
//   lags          12 basic features x 6 lags                      =  72
//   aggregates    12 features x 6 windows x {mean, sd, cv}        = 216
//   correlations  21 pairs of 7 features x 6 windows              = 126
//   context       up_time, cluster_removals_1h                    =   2

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nodefail/common.hpp"
#include "nodefail/parallel.hpp"
#include "nodefail/rolling.hpp"
#include "nodefail/trace.hpp"

namespace nodefail {

inline constexpr std::size_t kBasicFeatureCount = 12;

inline constexpr std::array<std::string_view, kBasicFeatureCount> kBasicFeatureNames{
    "tasks_running", "tasks_started", "ended_evicted", "ended_failed", "ended_finished", "ended_killed",
    "ended_lost",    "cpu",           "memory",        "disk_time",    "cpi",            "mai"};

enum BasicFeature : std::size_t {
  kTasksRunning,
  kTasksStarted,
  kEndedEvicted,
  kEndedFailed,
  kEndedFinished,
  kEndedKilled,
  kEndedLost,
  kCpu,
  kMemory,
  kDiskTime,
  kCpi,
  kMai,
};

/// Features entering the pairwise correlations.
inline constexpr std::array<std::size_t, 7> kCorrelatedFeatures{kTasksRunning, kTasksStarted, kEndedFailed, kCpu,
                                                                kMemory,       kDiskTime,     kCpi};

inline constexpr std::array<std::string_view, 3> kAggregateStats{"mean", "sd", "cv"};

struct FeatureLayout {
  Micros epoch_length = 300 * kSecond;
  int lags = 6;
  std::vector<int> window_hours{1, 12, 24, 48, 72, 96};

  std::size_t lag_columns() const { return kBasicFeatureCount * static_cast<std::size_t>(lags); }
  std::size_t aggregate_columns() const { return kBasicFeatureCount * window_hours.size() * 3; }
  static constexpr std::size_t pair_count() { return kCorrelatedFeatures.size() * (kCorrelatedFeatures.size() - 1) / 2; }
  std::size_t correlation_columns() const { return pair_count() * window_hours.size(); }
  static constexpr std::size_t context_columns() { return 2; }
  std::size_t column_count() const {
    return lag_columns() + aggregate_columns() + correlation_columns() + context_columns();
  }

  std::size_t window_epochs(std::size_t w) const {
    return static_cast<std::size_t>(window_hours[w] * kHour / epoch_length);
  }

  void check() const {
    if (epoch_length <= 0 || kHour % epoch_length != 0)
      throw InputError("epoch length must be a positive divisor of one hour");
    if (lags < 1) throw InputError("lag count must be >= 1");
    if (window_hours.empty()) throw InputError("at least one aggregation window is required");
    for (int h : window_hours)
      if (h < 1) throw InputError("aggregation windows must be >= 1 hour");
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    names.reserve(column_count());
    for (auto f : kBasicFeatureNames)
      for (int l = 0; l < lags; ++l) names.push_back(std::string(f) + "_lag" + std::to_string(l));
    for (auto f : kBasicFeatureNames)
      for (int h : window_hours)
        for (auto s : kAggregateStats) names.push_back(std::string(f) + "_" + std::string(s) + "_" + std::to_string(h) + "h");
    for (std::size_t a = 0; a < kCorrelatedFeatures.size(); ++a)
      for (std::size_t b = a + 1; b < kCorrelatedFeatures.size(); ++b)
        for (int h : window_hours)
          names.push_back("corr_" + std::string(kBasicFeatureNames[kCorrelatedFeatures[a]]) + "_" +
                          std::string(kBasicFeatureNames[kCorrelatedFeatures[b]]) + "_" + std::to_string(h) + "h");
    names.emplace_back("up_time");
    names.emplace_back("cluster_removals_1h");
    return names;
  }

  std::vector<std::string> coverage_names() const {
    std::vector<std::string> names;
    for (int h : window_hours) names.push_back("coverage_" + std::to_string(h) + "h");
    return names;
  }
};

struct EpochGrid {
  Micros epoch_length = 300 * kSecond;
  std::int64_t n_epochs = 0;  // epochs 0 .. n_epochs-1

  static EpochGrid for_trace(Micros trace_end, Micros epoch_length) {
    return {epoch_length, trace_end / epoch_length + 1};
  }
  Micros end_of(std::int64_t k) const { return k * epoch_length; }
  /// Epoch whose half-open span (t_{k-1}, t_k] contains ts.
  std::int64_t epoch_of(Micros ts) const { return (ts + epoch_length - 1) / epoch_length; }
  /// Time covered by the grid; benchmark windows must fit inside it.
  Micros span() const { return n_epochs * epoch_length; }
};

/// The 12 basic series of one machine; down epochs hold kMissing.
struct BasicFeatureSet {
  std::string machine_id;
  EpochGrid grid;
  std::vector<std::uint8_t> up;
  std::array<std::vector<double>, kBasicFeatureCount> series;
};

/// Whether the machine is up at each epoch end, from its ADD/REMOVE history.
inline std::vector<std::uint8_t> availability(const MachineHistory& h, const EpochGrid& grid) {
  std::vector<std::uint8_t> up(static_cast<std::size_t>(grid.n_epochs), 0);
  if (!h.first_add) return up;
  auto mark = [&](Micros from, Micros to, std::uint8_t v) {  // [from, to)
    std::int64_t k = std::max<std::int64_t>(0, grid.epoch_of(from));
    if (grid.end_of(k) < from) ++k;
    for (; k < grid.n_epochs && grid.end_of(k) < to; ++k) up[k] = v;
  };
  mark(*h.first_add, INT64_MAX, 1);
  for (const auto& d : h.down) mark(d.remove, d.add.value_or(INT64_MAX), 0);
  return up;
}

/// Basic features of one machine. `intervals` and `usage` must belong to the
/// machine.
inline BasicFeatureSet basic_features(const std::string& machine_id, const MachineHistory& history,
                                      std::span<const TaskInterval* const> intervals,
                                      std::span<const TaskUsage* const> usage, const EpochGrid& grid) {
  BasicFeatureSet b{machine_id, grid, availability(history, grid), {}};
  const auto n = static_cast<std::size_t>(grid.n_epochs);
  for (auto& s : b.series) s.assign(n, 0.0);
  const Micros len = grid.epoch_length;

  std::vector<double> running_diff(n + 1, 0.0);
  for (const TaskInterval* iv : intervals) {
    // Running at t_k when start <= t_k < end; open episodes run to the end.
    std::int64_t first = (iv->start + len - 1) / len;
    std::int64_t last = iv->end_status == EndStatus::Open ? grid.n_epochs - 1 : (iv->end + len - 1) / len - 1;
    first = std::max<std::int64_t>(first, 0);
    last = std::min<std::int64_t>(last, grid.n_epochs - 1);
    if (first <= last) {
      running_diff[first] += 1;
      running_diff[last + 1] -= 1;
    }
    const auto ks = grid.epoch_of(iv->start);
    if (ks < grid.n_epochs) b.series[kTasksStarted][ks] += 1;
    if (iv->end_status != EndStatus::Open) {
      const auto ke = grid.epoch_of(iv->end);
      if (ke < grid.n_epochs) b.series[kEndedEvicted + static_cast<std::size_t>(iv->end_status)][ke] += 1;
    }
  }
  double running = 0;
  for (std::size_t k = 0; k < n; ++k) {
    running += running_diff[k];
    b.series[kTasksRunning][k] = running;
  }

  std::vector<double> cpi_weight(n, 0.0), mai_weight(n, 0.0);
  for (const TaskUsage* u : usage) {
    for (std::int64_t k = std::max<std::int64_t>(1, u->start / len + 1); k < grid.n_epochs; ++k) {
      const Micros lo = std::max(u->start, (k - 1) * len);
      const Micros hi = std::min(u->end, k * len);
      if (hi <= lo) break;
      const double overlap = static_cast<double>(hi - lo);
      const double frac = overlap / static_cast<double>(len);
      if (u->cpu_rate) b.series[kCpu][k] += *u->cpu_rate * frac;
      if (u->mem_usage) b.series[kMemory][k] += *u->mem_usage * frac;
      if (u->disk_io_time) b.series[kDiskTime][k] += *u->disk_io_time * frac;
      if (u->cpi) {
        b.series[kCpi][k] += *u->cpi * overlap;
        cpi_weight[k] += overlap;
      }
      if (u->mai) {
        b.series[kMai][k] += *u->mai * overlap;
        mai_weight[k] += overlap;
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    b.series[kCpi][k] = cpi_weight[k] > 0 ? b.series[kCpi][k] / cpi_weight[k] : 0.0;
    b.series[kMai][k] = mai_weight[k] > 0 ? b.series[kMai][k] / mai_weight[k] : 0.0;
    if (!b.up[k])
      for (auto& s : b.series) s[k] = kMissing;
  }
  return b;
}

/// Values of one feature family for every epoch of a grid. Rows that cannot
/// be computed are marked invalid.
struct ColumnBlock {
  EpochGrid grid;
  std::size_t width = 0;
  std::vector<double> values;  // n_epochs x width
  std::vector<std::uint8_t> valid;

  ColumnBlock() = default;
  ColumnBlock(EpochGrid g, std::size_t w)
      : grid(g), width(w), values(static_cast<std::size_t>(g.n_epochs) * w, 0.0),
        valid(static_cast<std::size_t>(g.n_epochs), 0) {}
  double* row(std::size_t k) { return values.data() + k * width; }
  const double* row(std::size_t k) const { return values.data() + k * width; }
};

/// Lag columns: row k holds each feature at k, k-1, ..., k-lags+1. Rows whose
/// lag window reaches before the trace start or into a down epoch are invalid.
inline ColumnBlock lag_stack(const BasicFeatureSet& b, int lags = 6) {
  ColumnBlock out(b.grid, kBasicFeatureCount * static_cast<std::size_t>(lags));
  const std::size_t n = b.up.size();
  std::size_t up_run = 0;
  for (std::size_t k = 0; k < n; ++k) {
    up_run = b.up[k] ? up_run + 1 : 0;
    if (up_run < static_cast<std::size_t>(lags)) continue;
    out.valid[k] = 1;
    double* r = out.row(k);
    for (std::size_t f = 0; f < kBasicFeatureCount; ++f)
      for (int l = 0; l < lags; ++l) r[f * lags + l] = b.series[f][k - l];
  }
  return out;
}

struct AggregateColumns {
  ColumnBlock stats;     // mean/sd/cv per feature and window
  ColumnBlock coverage;  // available fraction per window
};

inline AggregateColumns rolling_aggregates(const BasicFeatureSet& b, const FeatureLayout& layout) {
  const std::size_t nw = layout.window_hours.size();
  AggregateColumns out{ColumnBlock(b.grid, kBasicFeatureCount * nw * 3), ColumnBlock(b.grid, nw)};
  const std::size_t n = b.up.size();
  for (std::size_t k = 0; k < n; ++k) out.stats.valid[k] = out.coverage.valid[k] = b.up[k];
  for (std::size_t f = 0; f < kBasicFeatureCount; ++f) {
    for (std::size_t w = 0; w < nw; ++w) {
      const std::size_t width = layout.window_epochs(w);
      const auto summary = rolling_summary(b.series[f], width);
      const std::size_t col = (f * nw + w) * 3;
      for (std::size_t k = 0; k < n; ++k) {
        double* r = out.stats.row(k);
        r[col] = summary[k].mean;
        r[col + 1] = summary[k].sd;
        r[col + 2] = summary[k].cv;
        if (f == 0) out.coverage.row(k)[w] = static_cast<double>(summary[k].count) / static_cast<double>(width);
      }
    }
  }
  return out;
}

inline ColumnBlock rolling_correlations(const BasicFeatureSet& b, const FeatureLayout& layout) {
  const std::size_t nw = layout.window_hours.size();
  ColumnBlock out(b.grid, FeatureLayout::pair_count() * nw);
  const std::size_t n = b.up.size();
  for (std::size_t k = 0; k < n; ++k) out.valid[k] = b.up[k];
  std::size_t pair = 0;
  for (std::size_t a = 0; a < kCorrelatedFeatures.size(); ++a) {
    for (std::size_t c = a + 1; c < kCorrelatedFeatures.size(); ++c, ++pair) {
      for (std::size_t w = 0; w < nw; ++w) {
        const auto r = rolling_pearson(b.series[kCorrelatedFeatures[a]], b.series[kCorrelatedFeatures[c]],
                                       layout.window_epochs(w));
        for (std::size_t k = 0; k < n; ++k) out.row(k)[pair * nw + w] = r[k];
      }
    }
  }
  return out;
}

/// REMOVE events of the whole cluster in (t_k - 1h, t_k], any cause.
inline std::vector<double> cluster_removals_1h(const std::vector<MachineEvent>& events, const EpochGrid& grid) {
  const auto n = static_cast<std::size_t>(grid.n_epochs);
  std::vector<double> per_epoch(n, 0.0), out(n, 0.0);
  for (const auto& e : events) {
    if (e.type != MachineEventType::Remove) continue;
    const auto k = grid.epoch_of(e.timestamp);
    if (k < grid.n_epochs) per_epoch[k] += 1;
  }
  const auto width = static_cast<std::size_t>(kHour / grid.epoch_length);
  double sum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sum += per_epoch[k];
    if (k >= width) sum -= per_epoch[k - width];
    out[k] = sum;
  }
  return out;
}

/// up_time (seconds since the latest ADD at or before t_k) and the shared
/// cluster removal count.
inline ColumnBlock context_features(const MachineHistory& h, std::span<const double> cluster_removals,
                                    const EpochGrid& grid) {
  ColumnBlock out(grid, 2);
  std::vector<Micros> adds;
  for (const auto& e : h.events)
    if (e.type == MachineEventType::Add) adds.push_back(e.timestamp);
  const auto up = availability(h, grid);
  std::size_t next_add = 0;
  std::optional<Micros> last_add;
  for (std::size_t k = 0; k < up.size(); ++k) {
    const Micros t = grid.end_of(static_cast<std::int64_t>(k));
    while (next_add < adds.size() && adds[next_add] <= t) last_add = adds[next_add++];
    if (!up[k] || !last_add) continue;
    out.valid[k] = 1;
    out.row(k)[0] = static_cast<double>(t - *last_add) / kSecond;
    out.row(k)[1] = cluster_removals[k];
  }
  return out;
}

/// Feature rows of one machine, plus labels once assigned.
struct FeatureBlock {
  std::uint32_t machine = 0;
  std::vector<std::int32_t> epochs;
  std::vector<float> values;    // rows x columns, row-major
  std::vector<float> coverage;  // rows x windows
  // Label columns; empty until labeled. -1 encodes "none".
  std::vector<std::uint8_t> classes;
  std::vector<std::int64_t> time_to_remove_us;
  std::vector<std::int64_t> time_to_failure_us;

  std::size_t rows() const { return epochs.size(); }
  bool labeled() const { return classes.size() == epochs.size() && !epochs.empty(); }
};

/// Inner join of the component blocks on the epoch grid. Only epochs valid in
/// every component become rows. Grids that do not line up give an empty block,
/// or an error in strict mode.
inline FeatureBlock assemble_matrix(std::uint32_t machine, const FeatureLayout& layout, const ColumnBlock& lags,
                                    const AggregateColumns& aggregates, const ColumnBlock& correlations,
                                    const ColumnBlock& context, bool strict = false) {
  if (lags.width != layout.lag_columns() || aggregates.stats.width != layout.aggregate_columns() ||
      correlations.width != layout.correlation_columns() || context.width != FeatureLayout::context_columns())
    throw std::runtime_error("feature column count mismatch: component widths do not add up to " +
                             std::to_string(layout.column_count()));
  FeatureBlock out;
  out.machine = machine;
  const ColumnBlock* parts[] = {&lags, &aggregates.stats, &aggregates.coverage, &correlations, &context};
  const EpochGrid g = lags.grid;
  for (const auto* p : parts) {
    if (p->grid.epoch_length != g.epoch_length || p->grid.n_epochs != g.n_epochs) {
      if (strict) throw InputError("feature components are on different epoch grids");
      return out;
    }
  }
  const std::size_t cols = layout.column_count();
  const std::size_t nw = aggregates.coverage.width;
  for (std::size_t k = 0; k < static_cast<std::size_t>(g.n_epochs); ++k) {
    bool ok = true;
    for (const auto* p : parts) ok = ok && p->valid[k];
    if (!ok) continue;
    out.epochs.push_back(static_cast<std::int32_t>(k));
    const std::size_t base = out.values.size();
    out.values.resize(base + cols);
    float* dst = out.values.data() + base;
    for (const ColumnBlock* p : {&lags, &aggregates.stats, &correlations, &context}) {
      const double* src = p->row(k);
      for (std::size_t c = 0; c < p->width; ++c) *dst++ = static_cast<float>(src[c]);
    }
    for (std::size_t w = 0; w < nw; ++w) out.coverage.push_back(static_cast<float>(aggregates.coverage.row(k)[w]));
  }
  return out;
}

/// Metadata shared by every block of a matrix; mirrored in the JSON sidecar.
struct MatrixMeta {
  std::vector<std::string> columns;
  std::vector<std::string> coverage_columns;
  std::vector<std::string> machines;
  Micros epoch_length = 300 * kSecond;
  Micros trace_end = 0;
  std::int64_t n_epochs = 0;
};

struct FeatureMatrix {
  MatrixMeta meta;
  std::vector<FeatureBlock> blocks;

  std::size_t rows() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.rows();
    return n;
  }
  std::size_t column_count() const { return meta.columns.size(); }
};

/// Prepared per-machine inputs of a trace; computes one machine at a time so
/// callers can stream blocks instead of holding the whole matrix.
class FeatureEngine {
 public:
  FeatureEngine(const TraceTables& trace, FeatureLayout layout) : layout_(std::move(layout)) {
    layout_.check();
    trace_end_ = trace.trace_end();
    grid_ = EpochGrid::for_trace(trace_end_, layout_.epoch_length);
    histories_ = machine_histories(trace.machine_events);
    for (const auto& [id, h] : histories_) {
      index_.emplace(id, machines_.size());
      machines_.push_back(id);
      if (!h.first_add) log_warning("machine " + id + " has no ADD event; no feature rows");
    }
    intervals_ = build_task_intervals(trace.task_events, trace_end_).intervals;
    by_machine_intervals_.resize(machines_.size());
    by_machine_usage_.resize(machines_.size());
    std::size_t unknown = 0;
    for (const auto& iv : intervals_) {
      auto it = index_.find(iv.machine_id);
      if (it == index_.end()) {
        ++unknown;
        continue;
      }
      by_machine_intervals_[it->second].push_back(&iv);
    }
    for (const auto& u : trace.task_usage) {
      auto it = index_.find(u.machine_id);
      if (it == index_.end()) {
        ++unknown;
        continue;
      }
      by_machine_usage_[it->second].push_back(&u);
    }
    if (unknown) log_warning(std::to_string(unknown) + " task rows reference machines without machine events");
    cluster_removals_ = cluster_removals_1h(trace.machine_events, grid_);
  }

  const FeatureLayout& layout() const { return layout_; }
  const EpochGrid& grid() const { return grid_; }
  const std::vector<std::string>& machines() const { return machines_; }
  const MachineHistory& history(std::size_t m) const { return histories_.at(machines_[m]); }
  Micros trace_end() const { return trace_end_; }

  MatrixMeta meta() const {
    return {layout_.column_names(), layout_.coverage_names(), machines_, layout_.epoch_length, trace_end_,
            grid_.n_epochs};
  }

  BasicFeatureSet basic(std::size_t m) const {
    return basic_features(machines_[m], history(m), by_machine_intervals_[m], by_machine_usage_[m], grid_);
  }

  FeatureBlock compute(std::size_t m) const {
    const auto& h = history(m);
    if (!h.first_add) {
      FeatureBlock empty;
      empty.machine = static_cast<std::uint32_t>(m);
      return empty;
    }
    const auto b = basic(m);
    return assemble_matrix(static_cast<std::uint32_t>(m), layout_, lag_stack(b, layout_.lags),
                           rolling_aggregates(b, layout_), rolling_correlations(b, layout_),
                           context_features(h, cluster_removals_, grid_));
  }

 private:
  FeatureLayout layout_;
  EpochGrid grid_;
  Micros trace_end_ = 0;
  std::map<std::string, MachineHistory> histories_;
  std::vector<std::string> machines_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<TaskInterval> intervals_;
  std::vector<std::vector<const TaskInterval*>> by_machine_intervals_;
  std::vector<std::vector<const TaskUsage*>> by_machine_usage_;
  std::vector<double> cluster_removals_;
};

/// Calls sink(block) for every machine in index order, computing up to `jobs`
/// machines at a time.
template <class Sink>
void for_each_feature_block(const FeatureEngine& engine, unsigned jobs, Sink&& sink) {
  const std::size_t n = engine.machines().size();
  const std::size_t batch = std::max<std::size_t>(1, jobs) * 2;
  std::vector<FeatureBlock> blocks;
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t count = std::min(batch, n - first);
    blocks.assign(count, {});
    parallel_for(count, jobs, [&](std::size_t i) { blocks[i] = engine.compute(first + i); });
    for (auto& b : blocks) sink(b);
  }
}

inline FeatureMatrix build_feature_matrix(const TraceTables& trace, const FeatureLayout& layout = {},
                                          unsigned jobs = 1) {
  FeatureEngine engine(trace, layout);
  FeatureMatrix m{engine.meta(), {}};
  for_each_feature_block(engine, jobs, [&](FeatureBlock& b) { m.blocks.push_back(std::move(b)); });
  return m;
}

}  // namespace nodefail
