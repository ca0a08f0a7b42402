#pragma once

// Seeded synthetic cluster traces with injected failure precursors.
//
// Failures are confirmed by construction: REMOVE followed by an ADD after
// 2h + Exp(6h). Maintenance removals come back after U(5min, 115min) and
// carry no precursor. Before each failure the machine drifts: tasks end with
// FAIL status more often and CPI rises, both scaled by precursor_strength,
// for the last precursor_hours before the REMOVE.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodefail/common.hpp"
#include "nodefail/parallel.hpp"
#include "nodefail/rng.hpp"
#include "nodefail/trace.hpp"

namespace nodefail {

struct SynthConfig {
  int n_machines = 200;
  double duration_days = 29;
  double task_arrival_rate = 4;      // tasks / machine / hour
  double mean_task_duration = 20;    // minutes
  double failure_rate = 0.15;        // failures / machine / 30 days
  double maintenance_rate = 1.0;     // short removals / machine / 30 days
  double precursor_strength = 2.0;   // 0 = failures independent of features
  double precursor_hours = 12;       // length of the drifted regime
  std::uint64_t seed = 1;
  // Benchmarks need 2 skipped + 10 train + 1 gap + 1 test days.
  bool require_benchmark_span = true;
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"n_machines", c.n_machines},
                     {"duration_days", c.duration_days},
                     {"task_arrival_rate", c.task_arrival_rate},
                     {"mean_task_duration", c.mean_task_duration},
                     {"failure_rate", c.failure_rate},
                     {"maintenance_rate", c.maintenance_rate},
                     {"precursor_strength", c.precursor_strength},
                     {"precursor_hours", c.precursor_hours},
                     {"seed", c.seed},
                     {"require_benchmark_span", c.require_benchmark_span}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  static const char* known[] = {"n_machines",         "duration_days",   "task_arrival_rate",
                                "mean_task_duration", "failure_rate",    "maintenance_rate",
                                "precursor_strength", "precursor_hours", "seed",
                                "require_benchmark_span"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw InputError("unknown synth config key '" + key + "'");
  }
  c.n_machines = j.value("n_machines", c.n_machines);
  c.duration_days = j.value("duration_days", c.duration_days);
  c.task_arrival_rate = j.value("task_arrival_rate", c.task_arrival_rate);
  c.mean_task_duration = j.value("mean_task_duration", c.mean_task_duration);
  c.failure_rate = j.value("failure_rate", c.failure_rate);
  c.maintenance_rate = j.value("maintenance_rate", c.maintenance_rate);
  c.precursor_strength = j.value("precursor_strength", c.precursor_strength);
  c.precursor_hours = j.value("precursor_hours", c.precursor_hours);
  c.seed = j.value("seed", c.seed);
  c.require_benchmark_span = j.value("require_benchmark_span", c.require_benchmark_span);
}

inline constexpr double kMinBenchmarkDays = 14;

inline void validate(const SynthConfig& c) {
  if (c.n_machines < 1) throw InputError("n_machines must be >= 1");
  if (!(c.duration_days > 0)) throw InputError("duration_days must be > 0");
  for (double r : {c.task_arrival_rate, c.failure_rate, c.maintenance_rate, c.precursor_strength})
    if (!(r >= 0)) throw InputError("rates and precursor_strength must be >= 0");
  if (!(c.mean_task_duration > 0)) throw InputError("mean_task_duration must be > 0");
  if (!(c.precursor_hours > 0)) throw InputError("precursor_hours must be > 0");
  if (c.require_benchmark_span && c.duration_days < kMinBenchmarkDays)
    throw InputError("duration_days = " + std::to_string(c.duration_days) +
                     " is too short for the benchmark windows: at least 14 days are needed "
                     "(2 skipped + 10 train + 1 gap + 1 test)");
}

inline std::string synth_machine_id(int m) {
  std::string id = std::to_string(m);
  return "m" + std::string(id.size() < 4 ? 4 - id.size() : 0, '0') + id;
}

namespace detail {

struct SynthDown {
  Micros remove;
  Micros add;  // may lie beyond trace end
  bool failure;
};

struct MachineTrace {
  std::vector<TaskEvent> events;
  std::vector<TaskUsage> usage;
  std::vector<MachineEvent> machine_events;
};

inline bool overlaps_any(const std::vector<SynthDown>& downs, Micros a, Micros b) {
  for (const auto& d : downs)
    if (a < d.add && b > d.remove) return true;
  return false;
}

/// 1 inside the window before a failure, else 0.
inline double precursor_intensity(const std::vector<SynthDown>& downs, Micros t, Micros window) {
  for (const auto& d : downs)
    if (d.failure && t < d.remove && d.remove - t <= window) return 1.0;
  return 0.0;
}

inline MachineTrace generate_machine(const SynthConfig& cfg, int m, std::vector<SynthDown> downs) {
  MachineTrace out;
  const Micros duration = static_cast<Micros>(std::llround(cfg.duration_days * kDay));
  const Micros window = static_cast<Micros>(std::llround(cfg.precursor_hours * kHour));
  const std::string machine = synth_machine_id(m);
  Rng rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(m)));

  // Maintenance removals: Poisson, skipped when they would overlap a failure.
  if (cfg.maintenance_rate > 0) {
    const double mean_gap = 30.0 * kDay / cfg.maintenance_rate;
    double t = rng.exponential(mean_gap);
    while (t < duration) {
      const Micros r = static_cast<Micros>(t);
      const Micros d = static_cast<Micros>(rng.uniform(5.0 * kMinute, 115.0 * kMinute));
      if (r > 0 && !overlaps_any(downs, r, r + d)) downs.push_back({r, r + d, false});
      t += rng.exponential(mean_gap);
    }
  }
  std::sort(downs.begin(), downs.end(), [](const SynthDown& a, const SynthDown& b) { return a.remove < b.remove; });

  out.machine_events.push_back({0, machine, MachineEventType::Add});
  for (const auto& d : downs) {
    out.machine_events.push_back({d.remove, machine, MachineEventType::Remove});
    if (d.add < duration) out.machine_events.push_back({d.add, machine, MachineEventType::Add});
  }

  struct UpPeriod {
    Micros begin, end;
    bool ends_in_failure;
    bool ends_in_removal;
  };
  std::vector<UpPeriod> ups;
  Micros cursor = 0;
  for (const auto& d : downs) {
    ups.push_back({cursor, d.remove, d.failure, true});
    cursor = d.add;
    if (cursor >= duration) break;
  }
  if (cursor < duration) ups.push_back({cursor, duration, false, false});

  const double strength = cfg.precursor_strength;
  const double mean_duration = cfg.mean_task_duration * kMinute;
  std::uint64_t job_seq = 0;

  for (const auto& up : ups) {
    if (cfg.task_arrival_rate <= 0) break;
    const double mean_gap = kHour / cfg.task_arrival_rate;
    double t = static_cast<double>(up.begin) + rng.exponential(mean_gap);
    while (t < up.end) {
      const Micros submit = static_cast<Micros>(t);
      t += rng.exponential(mean_gap);
      std::string job = "j" + std::to_string(m) + "-" + std::to_string(job_seq++);
      Micros sched = submit + static_cast<Micros>(rng.uniform(0.0, 30.0 * kSecond));
      if (sched >= up.end) continue;

      const double cpu = rng.uniform(0.02, 0.12);
      const double mem = rng.uniform(0.02, 0.10);
      const double disk = rng.uniform(0.001, 0.02);
      const double cpi = std::exp(0.15 * rng.normal());
      const double mai = rng.uniform(0.002, 0.012);

      out.events.push_back({submit, job, 0, "", TaskEventType::Submit});
      // One episode, plus at most one resubmission after a plain eviction.
      for (int episode = 0; episode < 2; ++episode) {
        Micros end = sched + std::max<Micros>(kSecond, static_cast<Micros>(rng.exponential(mean_duration)));
        std::optional<TaskEventType> terminal;
        if (end >= up.end) {
          end = up.end;
          if (up.ends_in_removal)
            terminal = up.ends_in_failure ? TaskEventType::Lost : TaskEventType::Evict;
        } else {
          const double boost = 1.0 + 2.0 * strength * precursor_intensity(downs, end, window);
          const double p_fail = std::min(0.9, 0.05 * boost);
          const double u = rng.uniform();
          const double rest = 1.0 - p_fail;
          if (u < p_fail) terminal = TaskEventType::Fail;
          else if (u < p_fail + rest * 0.84) terminal = TaskEventType::Finish;
          else if (u < p_fail + rest * 0.95) terminal = TaskEventType::Kill;
          else if (u < p_fail + rest * 0.99) terminal = TaskEventType::Evict;
          else terminal = TaskEventType::Lost;
        }
        out.events.push_back({sched, job, 0, machine, TaskEventType::Schedule});
        if (terminal) out.events.push_back({end, job, 0, machine, *terminal});

        // Usage records split on 5-minute boundaries.
        constexpr Micros kBucket = 300 * kSecond;
        for (Micros a = sched; a < end;) {
          const Micros b = std::min(end, (a / kBucket + 1) * kBucket);
          const double drift = 1.0 + 0.5 * strength * precursor_intensity(downs, a + (b - a) / 2, window);
          TaskUsage rec{a, b, job, 0, machine, {}, {}, {}, {}, {}};
          rec.cpu_rate = std::max(0.0, cpu * (1.0 + 0.1 * rng.normal()));
          rec.mem_usage = std::max(0.0, mem * (1.0 + 0.05 * rng.normal()));
          rec.disk_io_time = std::max(0.0, disk * (1.0 + 0.2 * rng.normal()));
          if (!rng.bernoulli(0.02)) rec.cpi = cpi * drift * std::exp(0.05 * rng.normal());
          if (!rng.bernoulli(0.02)) rec.mai = mai * (1.0 + 0.1 * rng.uniform());
          out.usage.push_back(std::move(rec));
          a = b;
        }

        if (terminal != TaskEventType::Evict || end >= up.end) break;
        sched = end + static_cast<Micros>(rng.uniform(10.0 * kSecond, 60.0 * kSecond));
        if (sched >= up.end) break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Generates the three trace tables. Output depends only on the config
/// (including its seed), never on `jobs`.
inline TraceTables generate_trace(const SynthConfig& cfg, unsigned jobs = 1) {
  validate(cfg);
  const Micros duration = static_cast<Micros>(std::llround(cfg.duration_days * kDay));
  const int n = cfg.n_machines;

  // Cluster-level failure schedule: one failure per slot of length
  // 1 / (n * rate), uniform inside the slot, on a uniformly drawn machine.
  std::vector<std::vector<detail::SynthDown>> downs(n);
  if (cfg.failure_rate > 0) {
    Rng rng(derive_seed(cfg.seed, 1));
    const double expected = n * cfg.failure_rate * cfg.duration_days / 30.0;
    const double slot = static_cast<double>(duration) / expected;
    for (std::int64_t i = 0;; ++i) {
      const double t = (static_cast<double>(i) + rng.uniform()) * slot;
      if (t >= duration) break;
      const Micros r = std::max<Micros>(kSecond, static_cast<Micros>(t));
      const Micros down = static_cast<Micros>(2.0 * kHour + rng.exponential(6.0 * kHour));
      const auto first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      for (int k = 0; k < n; ++k) {
        const int m = (first + k) % n;
        if (!detail::overlaps_any(downs[m], r, r + 1)) {
          downs[m].push_back({r, r + down, true});
          break;
        }
      }
    }
  }

  std::vector<detail::MachineTrace> parts(n);
  parallel_for(static_cast<std::size_t>(n), jobs,
               [&](std::size_t m) { parts[m] = detail::generate_machine(cfg, static_cast<int>(m), downs[m]); });

  TraceTables t;
  struct Ref {
    Micros ts;
    int machine;
    std::size_t idx;
    bool operator<(const Ref& o) const { return std::tie(ts, machine, idx) < std::tie(o.ts, o.machine, o.idx); }
  };
  auto merge = [&](auto member, auto ts_of, auto& dest) {
    std::vector<Ref> refs;
    for (int m = 0; m < n; ++m) {
      const auto& rows = parts[m].*member;
      for (std::size_t i = 0; i < rows.size(); ++i) refs.push_back({ts_of(rows[i]), m, i});
    }
    std::sort(refs.begin(), refs.end());
    dest.reserve(refs.size());
    for (const auto& r : refs) dest.push_back(std::move((parts[r.machine].*member)[r.idx]));
  };
  merge(&detail::MachineTrace::events, [](const TaskEvent& e) { return e.timestamp; }, t.task_events);
  merge(&detail::MachineTrace::usage, [](const TaskUsage& u) { return u.start; }, t.task_usage);
  merge(&detail::MachineTrace::machine_events, [](const MachineEvent& e) { return e.timestamp; },
        t.machine_events);
  return t;
}

}  // namespace nodefail
