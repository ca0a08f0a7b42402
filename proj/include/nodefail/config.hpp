#pragma once

// Run configuration shared by every CLI stage. Defaults reproduce the
// original pipeline: 5-minute epochs, 2 h down-time threshold, 24 h horizon,
// 0.5 % SAFE subsampling and the 6 x 14 x 5 classifier grid.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nodefail/bench.hpp"
#include "nodefail/common.hpp"
#include "nodefail/ensemble.hpp"
#include "nodefail/evaluation.hpp"
#include "nodefail/features.hpp"
#include "nodefail/labeling.hpp"
#include "nodefail/rng.hpp"
#include "nodefail/synth.hpp"

namespace nodefail {

struct RunConfig {
  FeatureLayout layout;
  LabelParams labels;
  double subsample_rate = 0.005;
  EnsembleConfig ensemble;
  BenchmarkParams benchmark;
  EvalParams evaluation;
  std::uint64_t seed = 1;
  std::optional<SynthConfig> synth;

  std::uint64_t subsample_seed() const { return derive_seed(seed, 1); }

  void check() const {
    layout.check();
    if (labels.downtime_threshold <= 0) throw InputError("downtime_threshold_hours must be > 0");
    if (labels.horizon <= 0) throw InputError("horizon_hours must be > 0");
    check_subsample_rate(subsample_rate);
    ensemble.check();
    benchmark.check();
    if (evaluation.fpr_targets.empty()) throw InputError("at least one FPR target is required");
    for (double t : evaluation.fpr_targets)
      if (!(t > 0 && t < 1)) throw InputError("FPR targets must lie in (0, 1)");
    if (!(evaluation.primary_fpr > 0 && evaluation.primary_fpr < 1)) throw InputError("primary_fpr must lie in (0, 1)");
    if (synth) validate(*synth);
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw InputError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw InputError("unknown key '" + key + "' in " + std::string(where));
  }
}

inline Micros hours_to_us(double h) { return static_cast<Micros>(std::llround(h * kHour)); }
inline Micros days_to_us(double d) { return static_cast<Micros>(std::llround(d * kDay)); }
inline double us_to_hours(Micros t) { return static_cast<double>(t) / kHour; }
inline double us_to_days(Micros t) { return static_cast<double>(t) / kDay; }

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{
      {"epoch_seconds", c.layout.epoch_length / kSecond},
      {"lags", c.layout.lags},
      {"window_hours", c.layout.window_hours},
      {"downtime_threshold_hours", detail::us_to_hours(c.labels.downtime_threshold)},
      {"horizon_hours", detail::us_to_hours(c.labels.horizon)},
      {"subsample_rate", c.subsample_rate},
      {"ensemble",
       {{"fsafe", c.ensemble.fsafe},
        {"tree_counts", c.ensemble.tree_counts},
        {"repetitions", c.ensemble.repetitions},
        {"features_per_split", c.ensemble.features_per_split},
        {"min_leaf", c.ensemble.min_leaf},
        {"max_depth", c.ensemble.max_depth}}},
      {"benchmark",
       {{"skip_days", detail::us_to_days(c.benchmark.skip)},
        {"train_days", detail::us_to_days(c.benchmark.train)},
        {"gap_days", detail::us_to_days(c.benchmark.gap)},
        {"test_days", detail::us_to_days(c.benchmark.test)},
        {"stride_days", detail::us_to_days(c.benchmark.stride)},
        {"count", c.benchmark.count},
        {"daily", c.benchmark.daily}}},
      {"evaluation", {{"fpr_targets", c.evaluation.fpr_targets}, {"primary_fpr", c.evaluation.primary_fpr}}},
      {"seed", c.seed}};
  if (c.synth) {
    nlohmann::json s;
    to_json(s, *c.synth);
    j["synth"] = s;
  }
  return j;
}

/// Missing keys keep their defaults; unknown keys are an error.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::check_keys(j,
                       {"epoch_seconds", "lags", "window_hours", "downtime_threshold_hours", "horizon_hours",
                        "subsample_rate", "ensemble", "benchmark", "evaluation", "seed", "synth", "description"},
                       "config");
    if (j.contains("epoch_seconds")) c.layout.epoch_length = j.at("epoch_seconds").get<std::int64_t>() * kSecond;
    c.layout.lags = j.value("lags", c.layout.lags);
    c.layout.window_hours = j.value("window_hours", c.layout.window_hours);
    if (j.contains("downtime_threshold_hours"))
      c.labels.downtime_threshold = detail::hours_to_us(j.at("downtime_threshold_hours").get<double>());
    if (j.contains("horizon_hours")) c.labels.horizon = detail::hours_to_us(j.at("horizon_hours").get<double>());
    c.subsample_rate = j.value("subsample_rate", c.subsample_rate);
    if (j.contains("ensemble")) {
      const auto& e = j.at("ensemble");
      detail::check_keys(e, {"fsafe", "tree_counts", "repetitions", "features_per_split", "min_leaf", "max_depth"},
                         "ensemble");
      c.ensemble.fsafe = e.value("fsafe", c.ensemble.fsafe);
      c.ensemble.tree_counts = e.value("tree_counts", c.ensemble.tree_counts);
      c.ensemble.repetitions = e.value("repetitions", c.ensemble.repetitions);
      c.ensemble.features_per_split = e.value("features_per_split", c.ensemble.features_per_split);
      c.ensemble.min_leaf = e.value("min_leaf", c.ensemble.min_leaf);
      c.ensemble.max_depth = e.value("max_depth", c.ensemble.max_depth);
    }
    if (j.contains("benchmark")) {
      const auto& b = j.at("benchmark");
      detail::check_keys(b, {"skip_days", "train_days", "gap_days", "test_days", "stride_days", "count", "daily"},
                         "benchmark");
      auto days = [&](const char* key, Micros& dst) {
        if (b.contains(key)) dst = detail::days_to_us(b.at(key).get<double>());
      };
      days("skip_days", c.benchmark.skip);
      days("train_days", c.benchmark.train);
      days("gap_days", c.benchmark.gap);
      days("test_days", c.benchmark.test);
      days("stride_days", c.benchmark.stride);
      c.benchmark.count = b.value("count", c.benchmark.count);
      c.benchmark.daily = b.value("daily", c.benchmark.daily);
    }
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      detail::check_keys(e, {"fpr_targets", "primary_fpr"}, "evaluation");
      c.evaluation.fpr_targets = e.value("fpr_targets", c.evaluation.fpr_targets);
      c.evaluation.primary_fpr = e.value("primary_fpr", c.evaluation.primary_fpr);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("synth")) c.synth = j.at("synth").get<SynthConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad config value: ") + e.what());
  }
  c.evaluation.epoch_length = c.layout.epoch_length;
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

/// FNV-1a of the canonical JSON form; identical configs hash identically.
inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace nodefail
