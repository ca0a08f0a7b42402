#pragma once

// Subsampled bagging pool and precision-weighted scoring.
//
// Every classifier trains on all positives plus a slice of the negatives
// taken from a running cursor over a shuffled negative pool. A slice that
// would reach the end of the pool restarts the cursor at 0 after a reshuffle.
// The cursor persists across repetitions. Scores are s_j = sum_i o_ij * p_i,
// summed in classifier order, then divided by the maximum over the set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodefail/common.hpp"
#include "nodefail/dataset.hpp"
#include "nodefail/forest.hpp"
#include "nodefail/parallel.hpp"
#include "nodefail/rng.hpp"

namespace nodefail {

struct EnsembleConfig {
  std::vector<double> fsafe{0.25, 0.5, 1, 2, 3, 4};
  std::vector<int> tree_counts{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  int repetitions = 5;
  int features_per_split = 0;  // 0: floor(sqrt(n_features))
  int min_leaf = 1;
  int max_depth = 0;
  std::uint64_t seed = 0;

  std::size_t pool_size() const { return fsafe.size() * tree_counts.size() * static_cast<std::size_t>(repetitions); }

  void check() const {
    if (fsafe.empty() || tree_counts.empty() || repetitions < 1)
      throw InputError("ensemble grids must be non-empty and repetitions >= 1");
    for (double f : fsafe)
      if (!(f > 0)) throw InputError("fsafe values must be > 0");
    for (int t : tree_counts)
      if (t < 1) throw InputError("tree counts must be >= 1");
    if (min_leaf < 1) throw InputError("min_leaf must be >= 1");
  }
};

struct ClassifierRecord {
  RandomForest forest;
  double fsafe = 0;
  int tree_count = 0;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::size_t slice_start = 0;
  std::size_t slice_length = 0;
  std::size_t shuffle_round = 0;  // reshuffles of the negative pool before this slice
  double precision = -1;          // p_i; negative until weighed
  std::size_t tp = 0, fp = 0;
};

/// One cursor step of the negative pool.
struct SliceStep {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t shuffle_round = 0;
};

/// Cursor positions for the whole pool in (repetition, fsafe, tree_count)
/// order, without touching any data.
inline std::vector<SliceStep> plan_negative_slices(std::size_t n_pos, std::size_t n_neg, const EnsembleConfig& c) {
  std::vector<SliceStep> plan;
  plan.reserve(c.pool_size());
  std::size_t start = 0, round = 0;
  for (int rep = 0; rep < c.repetitions; ++rep) {
    for (double fs : c.fsafe) {
      const auto len = static_cast<std::size_t>(std::floor(fs * static_cast<double>(n_pos)));
      if (len > n_neg)
        throw InputError("negative pool holds " + std::to_string(n_neg) + " points but fsafe " +
                         std::to_string(fs) + " needs a slice of " + std::to_string(len));
      for (std::size_t t = 0; t < c.tree_counts.size(); ++t) {
        if (start + len >= n_neg) {
          start = 0;
          ++round;
        }
        plan.push_back({start, len, round});
        start += len;
      }
    }
  }
  return plan;
}

/// Expands the plan into row-id slices. The negatives are put in key order,
/// shuffled once up front, then reshuffled in place at every restart.
inline std::vector<std::vector<std::uint32_t>> materialize_slices(std::vector<std::uint32_t> neg,
                                                                  const std::vector<SliceStep>& plan,
                                                                  std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(std::span(neg));
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve(plan.size());
  std::size_t round = 0;
  for (const auto& s : plan) {
    while (round < s.shuffle_round) {
      rng.shuffle(std::span(neg));
      ++round;
    }
    out.emplace_back(neg.begin() + static_cast<std::ptrdiff_t>(s.start),
                     neg.begin() + static_cast<std::ptrdiff_t>(s.start + s.length));
  }
  return out;
}

inline void sort_by_key(std::vector<std::uint32_t>& rows, const Dataset& d) {
  std::sort(rows.begin(), rows.end(), [&](std::uint32_t a, std::uint32_t b) {
    return d.keys[a] != d.keys[b] ? d.keys[a] < d.keys[b] : a < b;
  });
}

/// Seed layout: shuffles use derive_seed(seed, 0); classifier i trains with
/// derive_seed(seed, 1 + i).
inline std::vector<ClassifierRecord> build_ensemble(const Dataset& d, std::vector<std::uint32_t> train_pos,
                                                    std::vector<std::uint32_t> train_neg, const EnsembleConfig& c,
                                                    unsigned jobs = 1, const std::vector<std::string>& columns = {}) {
  c.check();
  if (train_pos.empty()) throw InputError("training set has no FAIL points");
  sort_by_key(train_pos, d);
  sort_by_key(train_neg, d);
  const auto plan = plan_negative_slices(train_pos.size(), train_neg.size(), c);
  const auto slices = materialize_slices(std::move(train_neg), plan, derive_seed(c.seed, 0));

  std::vector<ClassifierRecord> pool(plan.size());
  std::size_t i = 0;
  for (int rep = 0; rep < c.repetitions; ++rep)
    for (double fs : c.fsafe)
      for (int tc : c.tree_counts) {
        auto& r = pool[i];
        r.fsafe = fs;
        r.tree_count = tc;
        r.repetition = rep;
        r.seed = derive_seed(c.seed, 1 + i);
        r.slice_start = plan[i].start;
        r.slice_length = plan[i].length;
        r.shuffle_round = plan[i].shuffle_round;
        ++i;
      }

  // Largest forests first so the tail of the parallel loop is short.
  std::vector<std::size_t> order(pool.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pool[a].tree_count * (1 + pool[a].slice_length) > pool[b].tree_count * (1 + pool[b].slice_length);
  });
  parallel_for(pool.size(), jobs, [&](std::size_t k) {
    auto& r = pool[order[k]];
    std::vector<std::uint32_t> rows = train_pos;
    const auto& slice = slices[order[k]];
    rows.insert(rows.end(), slice.begin(), slice.end());
    ForestParams p;
    p.n_trees = r.tree_count;
    p.features_per_split = c.features_per_split;
    p.min_leaf = c.min_leaf;
    p.max_depth = c.max_depth;
    p.seed = r.seed;
    r.forest = train_forest(d, std::move(rows), p);
    r.forest.columns = columns;
  });
  return pool;
}

/// Votes of every classifier on the given rows, classifier-major.
struct VoteMatrix {
  std::size_t n_classifiers = 0;
  std::size_t n_points = 0;
  std::vector<std::uint8_t> votes;

  std::span<const std::uint8_t> of(std::size_t i) const { return {votes.data() + i * n_points, n_points}; }
  std::uint8_t at(std::size_t i, std::size_t j) const { return votes[i * n_points + j]; }
};

inline VoteMatrix collect_votes(const std::vector<ClassifierRecord>& pool, const Dataset& d,
                                std::span<const std::uint32_t> rows, unsigned jobs = 1) {
  VoteMatrix m{pool.size(), rows.size(), std::vector<std::uint8_t>(pool.size() * rows.size())};
  parallel_for(pool.size(), jobs, [&](std::size_t i) {
    for (std::size_t j = 0; j < rows.size(); ++j) m.votes[i * rows.size() + j] = pool[i].forest.predict(d, rows[j]);
  });
  return m;
}

struct PrecisionCount {
  double precision = 0;  // 0 when the classifier never votes FAIL
  std::size_t tp = 0, fp = 0;
};

inline PrecisionCount precision_from_votes(std::span<const std::uint8_t> votes, std::span<const std::uint8_t> labels) {
  PrecisionCount p;
  for (std::size_t j = 0; j < votes.size(); ++j)
    if (votes[j]) (labels[j] ? p.tp : p.fp)++;
  p.precision = p.tp + p.fp ? static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp) : 0.0;
  return p;
}

/// Sets p_i of every classifier from its votes on the individual test set.
inline void weigh_classifiers(std::vector<ClassifierRecord>& pool, const Dataset& d,
                              std::span<const std::uint32_t> individual_test, unsigned jobs = 1) {
  if (individual_test.empty()) throw InputError("individual test set is empty");
  const auto votes = collect_votes(pool, d, individual_test, jobs);
  std::vector<std::uint8_t> labels(individual_test.size());
  for (std::size_t j = 0; j < labels.size(); ++j) labels[j] = d.labels[individual_test[j]];
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto p = precision_from_votes(votes.of(i), labels);
    pool[i].precision = p.precision;
    pool[i].tp = p.tp;
    pool[i].fp = p.fp;
  }
}

/// Raw scores s_j = sum_i o_ij * p_i in classifier index order.
inline std::vector<double> score_votes(const VoteMatrix& votes, std::span<const double> weights) {
  if (weights.size() != votes.n_classifiers) throw std::invalid_argument("one weight per classifier required");
  std::vector<double> s(votes.n_points, 0.0);
  for (std::size_t i = 0; i < votes.n_classifiers; ++i) {
    const auto o = votes.of(i);
    for (std::size_t j = 0; j < s.size(); ++j)
      if (o[j]) s[j] += weights[i];
  }
  return s;
}

/// s'_j = s_j / max s; all zero when the maximum is zero.
inline std::vector<double> normalize_scores(std::span<const double> raw) {
  std::vector<double> out(raw.size(), 0.0);
  double max = 0;
  for (double v : raw) max = std::max(max, v);
  if (max > 0)
    for (std::size_t j = 0; j < raw.size(); ++j) out[j] = raw[j] / max;
  return out;
}

struct ScoredPoint {
  std::uint64_t key = 0;
  double raw = 0;
  double score = 0;
  std::uint8_t label = 0;
  std::int64_t time_to_remove_us = -1;
  std::int64_t time_to_failure_us = -1;
};

inline std::vector<double> precision_weights(const std::vector<ClassifierRecord>& pool) {
  std::vector<double> w(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].precision < 0) throw std::logic_error("ensemble scored before weighing");
    w[i] = pool[i].precision;
  }
  return w;
}

inline std::vector<ScoredPoint> score(const std::vector<ClassifierRecord>& pool, const BaseDataset& base,
                                      std::span<const std::uint32_t> rows, unsigned jobs = 1) {
  const auto weights = precision_weights(pool);
  const auto votes = collect_votes(pool, base.data, rows, jobs);
  const auto raw = score_votes(votes, weights);
  const auto norm = normalize_scores(raw);
  std::vector<ScoredPoint> out(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto r = rows[j];
    out[j] = {base.data.keys[r], raw[j], norm[j], base.data.labels[r], base.time_to_remove_us[r],
              base.time_to_failure_us[r]};
  }
  return out;
}

// Ensemble directory: forest_<i>.bin per record plus ensemble.json.

inline std::string forest_file_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "forest_" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n + ".bin";
}

inline nlohmann::json ensemble_json(const std::vector<ClassifierRecord>& pool, const EnsembleConfig& c) {
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& r = pool[i];
    records.push_back({{"file", forest_file_name(i)},
                       {"fsafe", r.fsafe},
                       {"tree_count", r.tree_count},
                       {"repetition", r.repetition},
                       {"seed", r.seed},
                       {"slice_start", r.slice_start},
                       {"slice_length", r.slice_length},
                       {"shuffle_round", r.shuffle_round},
                       {"precision", r.precision},
                       {"tp", r.tp},
                       {"fp", r.fp}});
  }
  return {{"fsafe", c.fsafe},
          {"tree_counts", c.tree_counts},
          {"repetitions", c.repetitions},
          {"features_per_split", c.features_per_split},
          {"min_leaf", c.min_leaf},
          {"max_depth", c.max_depth},
          {"seed", c.seed},
          {"pool_size", pool.size()},
          {"classifiers", records}};
}

inline void save_ensemble(const std::filesystem::path& dir, const std::vector<ClassifierRecord>& pool,
                          const EnsembleConfig& c) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < pool.size(); ++i) save_forest(dir / forest_file_name(i), pool[i].forest);
  write_text_file(dir / "ensemble.json", ensemble_json(pool, c).dump(2) + "\n");
}

inline std::vector<ClassifierRecord> load_ensemble(const std::filesystem::path& dir, EnsembleConfig* config = nullptr) {
  std::ifstream in(dir / "ensemble.json");
  if (!in) throw InputError("cannot open " + (dir / "ensemble.json").string());
  std::vector<ClassifierRecord> pool;
  try {
    const auto j = nlohmann::json::parse(in);
    if (config) {
      j.at("fsafe").get_to(config->fsafe);
      j.at("tree_counts").get_to(config->tree_counts);
      j.at("repetitions").get_to(config->repetitions);
      j.at("features_per_split").get_to(config->features_per_split);
      j.at("min_leaf").get_to(config->min_leaf);
      j.at("max_depth").get_to(config->max_depth);
      j.at("seed").get_to(config->seed);
    }
    for (const auto& r : j.at("classifiers")) {
      ClassifierRecord rec;
      rec.fsafe = r.at("fsafe").get<double>();
      rec.tree_count = r.at("tree_count").get<int>();
      rec.repetition = r.at("repetition").get<int>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      rec.slice_start = r.at("slice_start").get<std::size_t>();
      rec.slice_length = r.at("slice_length").get<std::size_t>();
      rec.shuffle_round = r.at("shuffle_round").get<std::size_t>();
      rec.precision = r.at("precision").get<double>();
      rec.tp = r.at("tp").get<std::size_t>();
      rec.fp = r.at("fp").get<std::size_t>();
      rec.forest = load_forest(dir / r.at("file").get<std::string>());
      pool.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad ensemble.json: " + std::string(e.what()));
  }
  return pool;
}

}  // namespace nodefail
