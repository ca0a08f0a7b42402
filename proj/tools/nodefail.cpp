// nodefail: command-line entry point for the node failure prediction
// pipeline. Exit status: 0 success, 1 usage or validation error, 2 runtime
// error. Summary JSON goes to stdout, progress to stderr.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nodefail/nodefail.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the master seed (synth: the trace seed)");
  cmd->add_option("--jobs", c.jobs, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
}

nodefail::RunConfig resolve(const Common& c) {
  nodefail::RunConfig cfg = c.config.empty() ? nodefail::RunConfig{} : nodefail::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Node failure prediction on cluster traces"};
  app.require_subcommand(1);
  Common common;
  std::string trace, work, out;
  std::vector<int> benchmarks;
  bool daily = false, keep_features = false, save_models = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic trace");
  add_common(synth, common);
  synth->add_option("--out", out, "output trace directory")->required();

  auto* validate = app.add_subcommand("validate", "parse and check a trace");
  add_common(validate, common);
  validate->add_option("--trace", trace, "trace directory")->required()->check(CLI::ExistingDirectory);

  auto* featurize = app.add_subcommand("featurize", "build the feature matrix");
  add_common(featurize, common);
  featurize->add_option("--trace", trace, "trace directory")->required()->check(CLI::ExistingDirectory);
  featurize->add_option("--work", work, "work directory")->required();

  auto* label = app.add_subcommand("label", "label and subsample the feature matrix");
  add_common(label, common);
  label->add_option("--trace", trace, "trace directory")->required()->check(CLI::ExistingDirectory);
  label->add_option("--work", work, "work directory holding features.bin")->required();

  auto* train = app.add_subcommand("train", "build and weigh the ensemble of each benchmark");
  add_common(train, common);
  train->add_option("--work", work, "work directory holding labeled.bin")->required();
  train->add_option("--benchmark", benchmarks, "1-based benchmark indices (default: all)");
  train->add_flag("--daily", daily, "one benchmark per day that fits");

  auto* eval = app.add_subcommand("eval", "score and evaluate trained benchmarks");
  add_common(eval, common);
  eval->add_option("--work", work, "work directory")->required();
  eval->add_option("--benchmark", benchmarks, "1-based benchmark indices (default: all)");
  eval->add_flag("--daily", daily, "one benchmark per day that fits");

  auto* bench = app.add_subcommand("bench", "run every stage for all benchmarks");
  add_common(bench, common);
  bench->add_option("--trace", trace, "trace directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--out", out, "output directory")->required();
  bench->add_flag("--daily", daily, "one benchmark per day that fits");
  bench->add_flag("--keep-features", keep_features, "also write features.bin and labeled.bin");
  bench->add_flag("--save-models", save_models, "also write each benchmark's ensemble");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto cfg = resolve(common);
    if (daily) cfg.benchmark.daily = true;
    if (synth->parsed()) {
      if (!cfg.synth) cfg.synth = nodefail::SynthConfig{};
      if (common.seed) cfg.synth->seed = *common.seed;
    }
    cfg.check();
    nodefail::StageOptions opts;
    opts.jobs = common.jobs;
    opts.benchmarks = benchmarks;
    opts.keep_features = keep_features;
    opts.save_models = save_models;

    if (synth->parsed()) {
      print(nodefail::stage_synth(cfg, out, opts.jobs));
    } else if (validate->parsed()) {
      bool ok = false;
      print(nodefail::stage_validate(cfg, trace, &ok));
      return ok ? 0 : 1;
    } else if (featurize->parsed()) {
      print(nodefail::stage_featurize(cfg, trace, work, opts.jobs));
    } else if (label->parsed()) {
      print(nodefail::stage_label(cfg, trace, work));
    } else if (train->parsed()) {
      print(nodefail::stage_train(cfg, work, opts));
    } else if (eval->parsed()) {
      print(nodefail::stage_eval(cfg, work, opts));
    } else if (bench->parsed()) {
      print(nodefail::stage_bench(cfg, trace, out, opts));
    }
    return 0;
  } catch (const nodefail::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
