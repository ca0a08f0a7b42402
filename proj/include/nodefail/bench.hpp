#pragma once

// Forward-in-time benchmarks over a labeled base dataset.
//
// Benchmark i (1-based) trains on [skip + (i-1)*stride, +train) and tests on
// the day that starts `gap` after training ends. Points are placed by their
// epoch end time. The test day is split per class into an individual half
// (classifier weights) and an ensemble half (evaluation).

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodefail/common.hpp"
#include "nodefail/dataset.hpp"
#include "nodefail/ensemble.hpp"
#include "nodefail/evaluation.hpp"
#include "nodefail/rng.hpp"

namespace nodefail {

struct BenchmarkParams {
  Micros skip = 2 * kDay;
  Micros train = 10 * kDay;
  Micros gap = 1 * kDay;
  Micros test = 1 * kDay;
  Micros stride = 1 * kDay;
  int count = 15;
  bool daily = false;  // run as many windows as fit instead of `count`

  Micros footprint() const { return skip + train + gap + test; }

  void check() const {
    if (skip < 0 || train <= 0 || test <= 0 || stride <= 0) throw InputError("benchmark windows must be positive");
    if (gap < 24 * kHour) throw InputError("the train/test gap must be at least 24 hours");
    if (!daily && count < 1) throw InputError("benchmark count must be >= 1");
  }
};

struct BenchmarkWindow {
  int index = 0;  // 1-based
  Micros train_start = 0, train_end = 0;
  Micros test_start = 0, test_end = 0;
};

/// Number of windows that fit in a span.
inline int max_benchmarks(Micros span, const BenchmarkParams& p) {
  if (span < p.footprint()) return 0;
  return static_cast<int>((span - p.footprint()) / p.stride) + 1;
}

inline std::vector<BenchmarkWindow> make_windows(Micros span, const BenchmarkParams& p) {
  p.check();
  const int fit = max_benchmarks(span, p);
  const int count = p.daily ? fit : p.count;
  if (count < 1 || count > fit)
    throw InputError("trace span of " + std::to_string(static_cast<double>(span) / kDay) + " days fits " +
                     std::to_string(fit) + " benchmark(s); " + std::to_string(p.daily ? 1 : p.count) +
                     " requested");
  std::vector<BenchmarkWindow> out;
  for (int i = 0; i < count; ++i) {
    BenchmarkWindow w;
    w.index = i + 1;
    w.train_start = p.skip + i * p.stride;
    w.train_end = w.train_start + p.train;
    w.test_start = w.train_end + p.gap;
    w.test_end = w.test_start + p.test;
    out.push_back(w);
  }
  return out;
}

struct BenchmarkSeeds {
  std::uint64_t benchmark = 0;
  std::uint64_t split = 0;
  std::uint64_t ensemble = 0;

  static BenchmarkSeeds for_index(std::uint64_t master, int index) {
    const auto b = derive_seed(master, 1000 + static_cast<std::uint64_t>(index));
    return {b, derive_seed(b, 1), derive_seed(b, 2)};
  }
};

struct BenchmarkSplit {
  BenchmarkWindow window;
  BenchmarkSeeds seeds;
  std::vector<std::uint32_t> train_pos, train_neg;
  std::vector<std::uint32_t> individual_test, ensemble_test;
};

struct TestHalves {
  std::vector<std::uint32_t> individual, ensemble;
};

/// Stratified 50/50 split: per class, rows in key order are shuffled and the
/// first floor(n/2) go to the individual half.
inline TestHalves split_test_day(const Dataset& d, std::vector<std::uint32_t> rows, std::uint64_t seed) {
  sort_by_key(rows, d);
  std::vector<std::uint32_t> by_class[2];
  for (auto r : rows) by_class[d.labels[r] ? 1 : 0].push_back(r);
  Rng rng(seed);
  TestHalves out;
  for (int c : {1, 0}) {
    auto& v = by_class[c];
    if (v.empty()) log_warning(std::string("test day has no ") + (c ? "FAIL" : "SAFE") + " points");
    rng.shuffle(std::span(v));
    const std::size_t half = v.size() / 2;
    out.individual.insert(out.individual.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(half));
    out.ensemble.insert(out.ensemble.end(), v.begin() + static_cast<std::ptrdiff_t>(half), v.end());
  }
  sort_by_key(out.individual, d);
  sort_by_key(out.ensemble, d);
  return out;
}

inline std::vector<BenchmarkSplit> make_benchmarks(const BaseDataset& base, const BenchmarkParams& p,
                                                   std::uint64_t master_seed) {
  const auto windows = make_windows(base.meta.n_epochs * base.meta.epoch_length, p);
  std::vector<BenchmarkSplit> out;
  for (const auto& w : windows) {
    BenchmarkSplit s;
    s.window = w;
    s.seeds = BenchmarkSeeds::for_index(master_seed, w.index);
    std::vector<std::uint32_t> test;
    for (std::size_t r = 0; r < base.rows(); ++r) {
      const Micros t = base.time_of(r);
      const auto id = static_cast<std::uint32_t>(r);
      if (t >= w.train_start && t < w.train_end)
        (base.data.labels[r] ? s.train_pos : s.train_neg).push_back(id);
      else if (t >= w.test_start && t < w.test_end)
        test.push_back(id);
    }
    sort_by_key(s.train_pos, base.data);
    sort_by_key(s.train_neg, base.data);
    auto halves = split_test_day(base.data, std::move(test), s.seeds.split);
    s.individual_test = std::move(halves.individual);
    s.ensemble_test = std::move(halves.ensemble);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::size_t count_fail(const Dataset& d, std::span<const std::uint32_t> rows) {
  std::size_t n = 0;
  for (auto r : rows) n += d.labels[r];
  return n;
}

inline nlohmann::json split_json(const BenchmarkSplit& s, const Dataset& d) {
  auto days = [](Micros t) { return static_cast<double>(t) / kDay; };
  auto counts = [&](std::span<const std::uint32_t> rows) {
    const auto fail = count_fail(d, rows);
    return nlohmann::json{{"fail", fail}, {"safe", rows.size() - fail}};
  };
  return {{"index", s.window.index},
          {"train_days", {days(s.window.train_start), days(s.window.train_end)}},
          {"test_days", {days(s.window.test_start), days(s.window.test_end)}},
          {"train_start_us", s.window.train_start},
          {"train_end_us", s.window.train_end},
          {"test_start_us", s.window.test_start},
          {"test_end_us", s.window.test_end},
          {"seeds", {{"benchmark", s.seeds.benchmark}, {"split", s.seeds.split}, {"ensemble", s.seeds.ensemble}}},
          {"train", {{"fail", s.train_pos.size()}, {"safe", s.train_neg.size()}}},
          {"individual_test", counts(s.individual_test)},
          {"ensemble_test", counts(s.ensemble_test)}};
}

struct BenchmarkResult {
  EvalReport report;
  std::vector<ScoredPoint> scored;
  std::vector<ClassifierRecord> pool;
};

inline nlohmann::json pool_stats(const std::vector<ClassifierRecord>& pool) {
  std::size_t zero = 0, nodes = 0, reshuffles = 0;
  double sum = 0;
  for (const auto& r : pool) {
    zero += r.tp + r.fp == 0;
    sum += r.precision;
    nodes += r.forest.node_count();
    reshuffles = std::max(reshuffles, r.shuffle_round);
  }
  return {{"classifiers", pool.size()},
          {"zero_vote_classifiers", zero},
          {"mean_precision", pool.empty() ? 0.0 : sum / static_cast<double>(pool.size())},
          {"total_nodes", nodes},
          {"negative_reshuffles", reshuffles}};
}

/// Trains the pool on the split's training points and weighs it on the
/// individual half. Seeds come from the split.
inline std::vector<ClassifierRecord> train_benchmark(const BaseDataset& base, const BenchmarkSplit& s,
                                                     EnsembleConfig config, unsigned jobs = 1) {
  config.seed = s.seeds.ensemble;
  auto pool = build_ensemble(base.data, s.train_pos, s.train_neg, config, jobs, base.meta.columns);
  weigh_classifiers(pool, base.data, s.individual_test, jobs);
  return pool;
}

inline BenchmarkResult evaluate_benchmark(const BaseDataset& base, const BenchmarkSplit& s,
                                          std::vector<ClassifierRecord> pool, const EvalParams& eval,
                                          unsigned jobs = 1) {
  BenchmarkResult r;
  r.scored = score(pool, base, s.ensemble_test, jobs);
  r.report = evaluate(r.scored, eval);
  r.pool = std::move(pool);
  return r;
}

inline BenchmarkResult run_benchmark(const BaseDataset& base, const BenchmarkSplit& s, const EnsembleConfig& config,
                                     const EvalParams& eval, unsigned jobs = 1) {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    auto pool = train_benchmark(base, s, config, jobs);
    auto result = evaluate_benchmark(base, s, std::move(pool), eval, jobs);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("bench " + std::to_string(s.window.index) + ": " + std::to_string(result.pool.size()) +
             " classifiers, AUROC " + std::to_string(result.report.auroc) + ", " + std::to_string(secs) + " s");
    return result;
  } catch (const InputError& e) {
    throw InputError("benchmark " + std::to_string(s.window.index) + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("benchmark " + std::to_string(s.window.index) + ": " + e.what());
  }
}

inline std::string bench_dir_name(int index) { return "bench_" + std::to_string(index); }

/// Writes the evaluation files and split.json for one benchmark.
inline void write_benchmark(const std::filesystem::path& dir, const BenchmarkSplit& s, const BaseDataset& base,
                            const BenchmarkResult& r, const nlohmann::json& run) {
  auto extra = run;
  extra["benchmark"] = s.window.index;
  extra["pool"] = pool_stats(r.pool);
  write_evaluation(dir, r.report, r.scored, extra);
  write_text_file(dir / "split.json", split_json(s, base.data).dump(2) + "\n");
}

}  // namespace nodefail
