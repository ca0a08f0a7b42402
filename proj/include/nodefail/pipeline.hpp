#pragma once

// File-based pipeline stages. Each returns the summary JSON printed by the
// CLI. `bench` runs featurize -> label -> train -> eval in memory and writes
// the same per-benchmark files as the staged commands.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodefail/bench.hpp"
#include "nodefail/config.hpp"
#include "nodefail/dataset.hpp"
#include "nodefail/ensemble.hpp"
#include "nodefail/evaluation.hpp"
#include "nodefail/features.hpp"
#include "nodefail/labeling.hpp"
#include "nodefail/matrix_io.hpp"
#include "nodefail/synth.hpp"
#include "nodefail/trace.hpp"

namespace nodefail {

inline constexpr std::string_view kFeaturesFile = "features.bin";
inline constexpr std::string_view kLabeledFile = "labeled.bin";
inline constexpr std::string_view kFailuresFile = "failures.csv";

struct StageOptions {
  unsigned jobs = 1;
  std::vector<int> benchmarks;  // train/eval: 1-based indices; empty = all
  bool keep_features = false;   // bench: also write the matrices
  bool save_models = false;     // bench: also write the ensembles
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline nlohmann::json summary_head(std::string_view command, const RunConfig& c) {
  return {{"command", command},
          {"config_hash", config_hash(c)},
          {"seeds", {{"master", c.seed}, {"subsample", c.subsample_seed()}}}};
}

/// The provenance block embedded in every report.json.
inline nlohmann::json run_block(const RunConfig& c) {
  return {{"config_hash", config_hash(c)}, {"seed", c.seed}, {"subsample_seed", c.subsample_seed()}};
}

inline std::vector<MachineEvent> load_machine_events(const std::filesystem::path& trace_dir) {
  std::ifstream in(trace_dir / kMachineEventsFile, std::ios::binary);
  if (!in) throw InputError("cannot open " + (trace_dir / kMachineEventsFile).string());
  auto r = parse_machine_events(in);
  for (const auto& w : r.warnings) log_warning(std::string(kMachineEventsFile) + ": " + w);
  return std::move(r.rows);
}

inline TraceTables load_checked_trace(const std::filesystem::path& trace_dir) {
  auto t = load_trace(trace_dir);
  for (const auto& w : t.warnings) log_warning(w);
  if (t.machine_events.empty()) throw InputError("trace has no machine events");
  return t;
}

inline std::string failures_csv(const std::vector<FailureEvent>& fs) {
  std::string out = "machine_id,remove_us,next_add_us,down_time_us,is_failure\n";
  for (const auto& f : fs) {
    out += f.machine_id;
    out += ',';
    append_int(out, f.remove_ts);
    out += ',';
    if (f.next_add_ts) append_int(out, *f.next_add_ts);
    out += ',';
    if (f.down_time) append_int(out, *f.down_time);
    out += f.is_failure ? ",1\n" : ",0\n";
  }
  return out;
}

inline nlohmann::json failure_counts(const std::vector<FailureEvent>& fs) {
  std::size_t n = 0;
  for (const auto& f : fs) n += f.is_failure;
  return {{"removals", fs.size()}, {"failures", n}};
}

inline nlohmann::json layout_json(const FeatureLayout& l) {
  return {{"columns", l.column_count()},
          {"lags", l.lag_columns()},
          {"aggregates", l.aggregate_columns()},
          {"correlations", l.correlation_columns()},
          {"context", FeatureLayout::context_columns()}};
}

/// Labels, then subsamples, one block in place.
inline void label_and_subsample(FeatureBlock& b, const MatrixMeta& meta,
                                const std::map<std::string, RemovalSchedule>& schedules, const RunConfig& c) {
  const auto& id = meta.machines.at(b.machine);
  const auto it = schedules.find(id);
  assign_classes(b, it == schedules.end() ? nullptr : &it->second, EpochGrid{meta.epoch_length, meta.n_epochs},
                 c.labels.horizon);
  subsample_safe(b, id, c.subsample_rate, c.subsample_seed());
}

inline nlohmann::json labeled_metadata(const RunConfig& c, const std::vector<FailureEvent>& fs) {
  return {{"subsample_rate", c.subsample_rate},
          {"subsample_seed", c.subsample_seed()},
          {"horizon_hours", us_to_hours(c.labels.horizon)},
          {"downtime_threshold_hours", us_to_hours(c.labels.downtime_threshold)},
          {"removals", failure_counts(fs)}};
}

inline BaseDataset load_base_dataset(const std::filesystem::path& path) {
  MatrixReader r(path);
  if (!r.labeled()) throw InputError(path.string() + " is not a labeled matrix; run `label` first");
  BaseDatasetBuilder b(r.meta());
  FeatureBlock block;
  while (r.next(block)) b.add(block);
  return b.finish();
}

inline std::vector<const BenchmarkSplit*> select(const std::vector<BenchmarkSplit>& all, const std::vector<int>& want) {
  std::vector<const BenchmarkSplit*> out;
  if (want.empty()) {
    for (const auto& s : all) out.push_back(&s);
    return out;
  }
  for (int i : want) {
    if (i < 1 || i > static_cast<int>(all.size()))
      throw InputError("benchmark " + std::to_string(i) + " does not exist (1.." + std::to_string(all.size()) + ")");
    out.push_back(&all[static_cast<std::size_t>(i - 1)]);
  }
  return out;
}

inline nlohmann::json bench_summary_row(const BenchmarkSplit& s, const EvalReport& r) {
  return {{"index", s.window.index},
          {"auroc", r.auroc},
          {"aupr", r.aupr},
          {"primary_tpr", r.primary.tpr},
          {"primary_fpr", r.primary.fpr},
          {"event_recall", to_json(r.primary_event_recall)["recall"]},
          {"seeds", {{"benchmark", s.seeds.benchmark}, {"split", s.seeds.split}, {"ensemble", s.seeds.ensemble}}}};
}

}  // namespace detail

inline nlohmann::json stage_synth(const RunConfig& c, const std::filesystem::path& out_dir, unsigned jobs) {
  const SynthConfig sc = c.synth.value_or(SynthConfig{});
  detail::Stopwatch sw;
  const auto trace = generate_trace(sc, jobs);
  write_trace(out_dir, trace);
  nlohmann::json synth;
  to_json(synth, sc);
  auto s = detail::summary_head("synth", c);
  s["seeds"]["synth"] = sc.seed;
  s["synth"] = synth;
  s["out"] = out_dir.string();
  s["task_events"] = trace.task_events.size();
  s["task_usage"] = trace.task_usage.size();
  s["machine_events"] = trace.machine_events.size();
  log_line("synth: wrote " + out_dir.string() + " in " + std::to_string(sw.seconds()) + " s");
  return s;
}

inline nlohmann::json stage_validate(const RunConfig& c, const std::filesystem::path& trace_dir, bool* ok) {
  const auto t = load_trace(trace_dir);
  const auto r = validate_trace(t);
  *ok = r.ok();
  auto s = detail::summary_head("validate", c);
  s["ok"] = r.ok();
  s["malformed_rows"] = r.malformed_rows;
  s["duplicate_task_events"] = r.duplicate_task_events;
  s["orphan_terminal_events"] = r.orphan_terminal_events;
  s["repeated_schedules"] = r.repeated_schedules;
  s["machine_sequence_violations"] = r.machine_sequence_violations;
  s["intervals_overlapping_down"] = r.intervals_overlapping_down;
  s["tasks_on_unknown_machines"] = r.tasks_on_unknown_machines;
  s["closed_intervals"] = r.closed_intervals;
  s["open_intervals"] = r.open_intervals;
  s["messages"] = r.messages;
  s["trace_end_us"] = t.trace_end();
  return s;
}

inline nlohmann::json stage_featurize(const RunConfig& c, const std::filesystem::path& trace_dir,
                                      const std::filesystem::path& work, unsigned jobs) {
  detail::Stopwatch sw;
  const auto trace = detail::load_checked_trace(trace_dir);
  FeatureEngine engine(trace, c.layout);
  std::filesystem::create_directories(work);
  MatrixWriter w(work / kFeaturesFile, engine.meta(), false);
  for_each_feature_block(engine, jobs, [&](FeatureBlock& b) { w.write(b); });
  w.finish();
  auto s = detail::summary_head("featurize", c);
  s["matrix"] = (work / kFeaturesFile).string();
  s["columns"] = c.layout.column_count();
  s["column_groups"] = detail::layout_json(c.layout);
  s["rows"] = w.rows();
  s["machines"] = engine.machines().size();
  s["n_epochs"] = engine.grid().n_epochs;
  log_line("featurize: " + std::to_string(w.rows()) + " rows in " + std::to_string(sw.seconds()) + " s");
  return s;
}

inline nlohmann::json stage_label(const RunConfig& c, const std::filesystem::path& trace_dir,
                                  const std::filesystem::path& work) {
  const auto failures = identify_failures(detail::load_machine_events(trace_dir), c.labels.downtime_threshold);
  const auto schedules = removal_schedules(failures);
  write_text_file(work / kFailuresFile, detail::failures_csv(failures));
  MatrixReader r(work / kFeaturesFile);
  if (r.labeled()) throw InputError("features.bin is already labeled");
  MatrixWriter w(work / kLabeledFile, r.meta(), true, detail::labeled_metadata(c, failures));
  FeatureBlock b;
  std::size_t seen = 0;
  while (r.next(b)) {
    seen += b.rows();
    detail::label_and_subsample(b, r.meta(), schedules, c);
    w.write(b);
  }
  w.finish();
  const auto side = read_sidecar(work / kLabeledFile);
  auto s = detail::summary_head("label", c);
  s["matrix"] = (work / kLabeledFile).string();
  s["input_rows"] = seen;
  s["rows"] = side.at("rows");
  s["fail_rows"] = side.at("fail_rows");
  s["safe_rows"] = side.at("safe_rows");
  s["removals"] = detail::failure_counts(failures);
  return s;
}

inline nlohmann::json stage_train(const RunConfig& c, const std::filesystem::path& work, const StageOptions& o) {
  const auto base = detail::load_base_dataset(work / kLabeledFile);
  const auto splits = make_benchmarks(base, c.benchmark, c.seed);
  auto s = detail::summary_head("train", c);
  s["benchmarks"] = nlohmann::json::array();
  for (const auto* split : detail::select(splits, o.benchmarks)) {
    detail::Stopwatch sw;
    const auto dir = work / bench_dir_name(split->window.index);
    auto pool = train_benchmark(base, *split, c.ensemble, o.jobs);
    auto ec = c.ensemble;
    ec.seed = split->seeds.ensemble;
    save_ensemble(dir / "ensemble", pool, ec);
    write_text_file(dir / "split.json", split_json(*split, base.data).dump(2) + "\n");
    s["benchmarks"].push_back({{"index", split->window.index},
                               {"classifiers", pool.size()},
                               {"seeds", {{"benchmark", split->seeds.benchmark},
                                          {"split", split->seeds.split},
                                          {"ensemble", split->seeds.ensemble}}}});
    log_line("train: benchmark " + std::to_string(split->window.index) + " in " + std::to_string(sw.seconds()) +
             " s");
  }
  return s;
}

inline nlohmann::json stage_eval(const RunConfig& c, const std::filesystem::path& work, const StageOptions& o) {
  const auto base = detail::load_base_dataset(work / kLabeledFile);
  const auto splits = make_benchmarks(base, c.benchmark, c.seed);
  auto s = detail::summary_head("eval", c);
  s["benchmarks"] = nlohmann::json::array();
  for (const auto* split : detail::select(splits, o.benchmarks)) {
    const auto dir = work / bench_dir_name(split->window.index);
    auto pool = load_ensemble(dir / "ensemble");
    if (pool.size() != c.ensemble.pool_size())
      throw InputError(dir.string() + ": ensemble has " + std::to_string(pool.size()) + " classifiers, config expects " +
                       std::to_string(c.ensemble.pool_size()));
    const auto r = evaluate_benchmark(base, *split, std::move(pool), c.evaluation, o.jobs);
    write_benchmark(dir, *split, base, r, detail::run_block(c));
    s["benchmarks"].push_back(detail::bench_summary_row(*split, r.report));
  }
  return s;
}

inline nlohmann::json stage_bench(const RunConfig& c, const std::filesystem::path& trace_dir,
                                  const std::filesystem::path& out, const StageOptions& o) {
  detail::Stopwatch total;
  const auto trace = detail::load_checked_trace(trace_dir);
  const auto failures = identify_failures(trace.machine_events, c.labels.downtime_threshold);
  const auto schedules = removal_schedules(failures);
  FeatureEngine engine(trace, c.layout);
  const auto meta = engine.meta();
  std::filesystem::create_directories(out);

  std::optional<MatrixWriter> features, labeled;
  if (o.keep_features) {
    write_text_file(out / kFailuresFile, detail::failures_csv(failures));
    features.emplace(out / kFeaturesFile, meta, false);
    labeled.emplace(out / kLabeledFile, meta, true, detail::labeled_metadata(c, failures));
  }
  BaseDatasetBuilder builder(meta);
  for_each_feature_block(engine, o.jobs, [&](FeatureBlock& b) {
    if (features) features->write(b);
    detail::label_and_subsample(b, meta, schedules, c);
    if (labeled) labeled->write(b);
    builder.add(b);
  });
  if (features) features->finish();
  if (labeled) labeled->finish();
  const auto base = builder.finish();
  log_line("bench: base dataset of " + std::to_string(base.rows()) + " points after " +
           std::to_string(total.seconds()) + " s");

  const auto splits = make_benchmarks(base, c.benchmark, c.seed);
  auto s = detail::summary_head("bench", c);
  s["removals"] = detail::failure_counts(failures);
  s["base_rows"] = base.rows();
  s["benchmarks"] = nlohmann::json::array();
  double auroc_sum = 0;
  for (const auto& split : splits) {
    const auto dir = out / bench_dir_name(split.window.index);
    const auto r = run_benchmark(base, split, c.ensemble, c.evaluation, o.jobs);
    write_benchmark(dir, split, base, r, detail::run_block(c));
    if (o.save_models) {
      auto ec = c.ensemble;
      ec.seed = split.seeds.ensemble;
      save_ensemble(dir / "ensemble", r.pool, ec);
    }
    s["benchmarks"].push_back(detail::bench_summary_row(split, r.report));
    auroc_sum += r.report.auroc;
  }
  s["mean_auroc"] = auroc_sum / static_cast<double>(splits.size());
  log_line("bench: " + std::to_string(splits.size()) + " benchmarks in " + std::to_string(total.seconds()) + " s");
  return s;
}

}  // namespace nodefail
