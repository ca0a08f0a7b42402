#pragma once

// CART decision trees and random forests for binary SAFE/FAIL data.
//
// Trees train on row ids into a column-major Dataset and never copy feature
// values. Bootstrap multiplicities become integer sample weights. Splits
// minimize weighted Gini impurity over midpoints of adjacent distinct values;
// a row goes left when value <= threshold.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodefail/common.hpp"
#include "nodefail/dataset.hpp"
#include "nodefail/parallel.hpp"
#include "nodefail/rng.hpp"

namespace nodefail {

struct ForestParams {
  int n_trees = 10;
  int features_per_split = 0;  // 0: floor(sqrt(n_features))
  int min_leaf = 1;            // minimum distinct training rows per leaf
  int max_depth = 0;           // 0: unlimited
  std::uint64_t seed = 0;

  int resolved_features(std::size_t n_features) const {
    const int f = features_per_split > 0 ? features_per_split
                                         : static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_features))));
    return std::clamp(f, 1, static_cast<int>(std::max<std::size_t>(1, n_features)));
  }
  bool operator==(const ForestParams&) const = default;
};

inline void to_json(nlohmann::json& j, const ForestParams& p) {
  j = {{"n_trees", p.n_trees},
       {"features_per_split", p.features_per_split},
       {"min_leaf", p.min_leaf},
       {"max_depth", p.max_depth},
       {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, ForestParams& p) {
  j.at("n_trees").get_to(p.n_trees);
  j.at("features_per_split").get_to(p.features_per_split);
  j.at("min_leaf").get_to(p.min_leaf);
  j.at("max_depth").get_to(p.max_depth);
  j.at("seed").get_to(p.seed);
}

struct TreeNode {
  std::int32_t feature = -1;  // -1: leaf
  double threshold = 0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t count_safe = 0;  // weighted training counts
  std::uint32_t count_fail = 0;

  bool is_leaf() const { return feature < 0; }
  std::uint8_t leaf_class() const { return count_fail > count_safe ? 1 : 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // root at 0

  template <class Row>
  std::uint8_t predict(const Row& value_of) const {
    std::int32_t i = 0;
    for (;;) {
      const TreeNode& n = nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) return n.leaf_class();
      i = static_cast<double>(value_of(static_cast<std::size_t>(n.feature))) <= n.threshold ? n.left : n.right;
    }
  }
  std::size_t depth() const {
    std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 1}};
    std::size_t best = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      const auto& n = nodes[static_cast<std::size_t>(i)];
      if (!n.is_leaf()) {
        stack.push_back({n.left, d + 1});
        stack.push_back({n.right, d + 1});
      }
    }
    return best;
  }
  bool operator==(const DecisionTree&) const = default;
};

/// Maps a float to an unsigned integer with the same ordering; -0 and +0 map
/// to the same value.
inline std::uint32_t ordered_bits(float v) {
  if (v == 0.0f) v = 0.0f;
  const auto u = std::bit_cast<std::uint32_t>(v);
  return (u & 0x80000000u) ? ~u : (u | 0x80000000u);
}

inline float from_ordered_bits(std::uint32_t o) {
  return std::bit_cast<float>((o & 0x80000000u) ? (o & 0x7FFFFFFFu) : ~o);
}

/// The split score maximized by the tree builder: sum over children of
/// (pos^2 + neg^2) / size, which equals total weight minus weighted Gini.
inline double split_score(double lp, double ln, double rp, double rn) {
  return (lp * lp + ln * ln) / (lp + ln) + (rp * rp + rn * rn) / (rp + rn);
}

namespace detail {

/// Sort keys of (ordered value << 32 | weight << 1 | label). Small inputs use
/// std::sort; larger ones an LSD radix sort on the value bits, which leaves
/// equal values in input order (the low bits are not needed for the scan).
inline constexpr std::size_t kRadixMinKeys = 512;

inline void sort_split_keys(std::vector<std::uint64_t>& keys, std::size_t n, std::vector<std::uint64_t>& scratch) {
  if (n < kRadixMinKeys) {
    std::sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n));
    return;
  }
  if (scratch.size() < n) scratch.resize(n);
  std::uint64_t* src = keys.data();
  std::uint64_t* dst = scratch.data();
  constexpr int kBits = 11;
  constexpr std::size_t kBuckets = std::size_t{1} << kBits;
  std::size_t count[kBuckets];
  for (int shift = 32; shift < 64; shift += kBits) {
    std::memset(count, 0, sizeof count);
    for (std::size_t i = 0; i < n; ++i) ++count[(src[i] >> shift) & (kBuckets - 1)];
    if (count[(src[0] >> shift) & (kBuckets - 1)] == n) continue;
    std::size_t sum = 0;
    for (auto& c : count) {
      const std::size_t c0 = c;
      c = sum;
      sum += c0;
    }
    for (std::size_t i = 0; i < n; ++i) dst[count[(src[i] >> shift) & (kBuckets - 1)]++] = src[i];
    std::swap(src, dst);
  }
  if (src != keys.data()) std::copy(src, src + n, keys.data());
}

struct SplitChoice {
  bool found = false;
  std::int32_t feature = -1;
  double threshold = 0;
  double score = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& d, const ForestParams& p, Rng& rng)
      : d_(d), p_(p), rng_(rng), mtry_(p.resolved_features(d.n_features)), features_(d.n_features) {
    std::iota(features_.begin(), features_.end(), 0u);
  }

  /// rows[i] is a distinct row id carrying integer weight weights[i] > 0.
  DecisionTree build(std::vector<std::uint32_t> rows, std::vector<std::uint32_t> weights) {
    rows_ = std::move(rows);
    weights_ = std::move(weights);
    keys_.resize(rows_.size());
    DecisionTree tree;
    struct Task {
      std::size_t begin, end;
      int depth;
      std::int32_t node;
    };
    std::vector<Task> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, rows_.size(), 0, 0});
    while (!stack.empty()) {
      const Task t = stack.back();
      stack.pop_back();
      std::uint32_t pos = 0, neg = 0;
      for (std::size_t i = t.begin; i < t.end; ++i) (d_.labels[rows_[i]] ? pos : neg) += weights_[i];
      TreeNode& node = tree.nodes[static_cast<std::size_t>(t.node)];
      node.count_fail = pos;
      node.count_safe = neg;
      const std::size_t n = t.end - t.begin;
      if (pos == 0 || neg == 0 || n < 2 * static_cast<std::size_t>(p_.min_leaf) ||
          (p_.max_depth > 0 && t.depth >= p_.max_depth))
        continue;
      const SplitChoice s = best_split(t.begin, t.end, pos, neg);
      if (!s.found) continue;
      const auto col = d_.column(static_cast<std::size_t>(s.feature));
      std::size_t mid = t.begin;
      for (std::size_t i = t.begin; i < t.end; ++i) {
        if (static_cast<double>(col[rows_[i]]) <= s.threshold) {
          std::swap(rows_[i], rows_[mid]);
          std::swap(weights_[i], weights_[mid]);
          ++mid;
        }
      }
      const auto left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& parent = tree.nodes[static_cast<std::size_t>(t.node)];
      parent.feature = s.feature;
      parent.threshold = s.threshold;
      parent.left = left;
      parent.right = left + 1;
      // Right first so the left subtree is numbered next; node ids do not
      // affect predictions.
      stack.push_back({mid, t.end, t.depth + 1, left + 1});
      stack.push_back({t.begin, mid, t.depth + 1, left});
    }
    return tree;
  }

 private:
  SplitChoice best_split(std::size_t begin, std::size_t end, std::uint32_t pos, std::uint32_t neg) {
    SplitChoice best;
    const std::size_t n = end - begin;
    const auto min_leaf = static_cast<std::size_t>(p_.min_leaf);
    int visited = 0;
    // Features are drawn without replacement; constant ones do not count
    // toward mtry, and drawing continues until a valid split exists.
    for (std::size_t drawn = 0; drawn < features_.size(); ++drawn) {
      if (visited >= mtry_ && best.found) break;
      const std::size_t j = drawn + static_cast<std::size_t>(rng_.below(features_.size() - drawn));
      std::swap(features_[drawn], features_[j]);
      const std::uint32_t f = features_[drawn];
      const auto col = d_.column(f);

      std::uint32_t lo = UINT32_MAX, hi = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = rows_[begin + i];
        const std::uint32_t v = ordered_bits(col[r]);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        keys_[i] = (std::uint64_t{v} << 32) | (std::uint64_t{weights_[begin + i]} << 1) | d_.labels[r];
      }
      if (lo == hi) continue;
      ++visited;
      sort_split_keys(keys_, n, scratch_);

      double lp = 0, ln = 0;
      const double tp = pos, tn = neg;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::uint64_t k = keys_[i];
        const double w = static_cast<double>((k >> 1) & 0x7FFFFFFFu);
        (k & 1 ? lp : ln) += w;
        const auto v = static_cast<std::uint32_t>(k >> 32);
        const auto next = static_cast<std::uint32_t>(keys_[i + 1] >> 32);
        if (v == next || i + 1 < min_leaf || n - i - 1 < min_leaf) continue;
        const double score = split_score(lp, ln, tp - lp, tn - ln);
        if (!best.found || score > best.score) {
          best.found = true;
          best.score = score;
          best.feature = static_cast<std::int32_t>(f);
          best.threshold =
              0.5 * (static_cast<double>(from_ordered_bits(v)) + static_cast<double>(from_ordered_bits(next)));
        }
      }
    }
    return best;
  }

  const Dataset& d_;
  const ForestParams& p_;
  Rng& rng_;
  int mtry_;
  std::vector<std::uint32_t> features_;
  std::vector<std::uint32_t> rows_, weights_;
  std::vector<std::uint64_t> keys_, scratch_;
};

}  // namespace detail

/// Grows one tree on weighted rows (weights[i] > 0 for every i).
inline DecisionTree train_tree(const Dataset& d, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> weights,
                               const ForestParams& p, Rng& rng) {
  if (rows.empty()) throw InputError("cannot train a tree on an empty dataset");
  if (weights.size() != rows.size()) throw std::invalid_argument("rows and weights differ in length");
  detail::TreeBuilder builder(d, p, rng);
  return builder.build(std::move(rows), std::move(weights));
}

inline DecisionTree train_tree(const Dataset& d, std::vector<std::uint32_t> rows, const ForestParams& p, Rng& rng) {
  std::vector<std::uint32_t> w(rows.size(), 1);
  return train_tree(d, std::move(rows), std::move(w), p, rng);
}

class RandomForest {
 public:
  ForestParams params;
  std::size_t n_features = 0;
  std::vector<std::string> columns;
  std::vector<DecisionTree> trees;

  /// Majority vote; an exact tie is SAFE.
  template <class Row>
  std::uint8_t predict(const Row& value_of) const {
    std::size_t fail = 0;
    for (const auto& t : trees) fail += t.predict(value_of);
    return 2 * fail > trees.size() ? 1 : 0;
  }

  std::uint8_t predict(std::span<const float> row) const {
    if (row.size() != n_features)
      throw InputError("feature row has " + std::to_string(row.size()) + " values, forest expects " +
                       std::to_string(n_features));
    return predict([&](std::size_t f) { return row[f]; });
  }

  std::uint8_t predict(const Dataset& d, std::size_t row) const {
    if (d.n_features != n_features)
      throw InputError("dataset has " + std::to_string(d.n_features) + " features, forest expects " +
                       std::to_string(n_features));
    return predict([&](std::size_t f) { return d.value(row, f); });
  }

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& t : trees) n += t.nodes.size();
    return n;
  }
  bool operator==(const RandomForest&) const = default;
};

/// Bootstrap multiplicities for n rows: n draws with replacement.
inline std::vector<std::uint32_t> bootstrap_counts(std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[rng.below(n)];
  return counts;
}

/// Trains params.n_trees trees, tree t on a bootstrap drawn from
/// derive_seed(params.seed, t). Rows are put in key order first, so the
/// result does not depend on the order of `rows`.
inline RandomForest train_forest(const Dataset& d, std::vector<std::uint32_t> rows, const ForestParams& params,
                                 unsigned jobs = 1) {
  if (params.n_trees < 1) throw InputError("a forest needs at least one tree");
  if (params.min_leaf < 1) throw InputError("min_leaf must be >= 1");
  if (rows.empty()) throw InputError("cannot train a forest on an empty dataset");
  std::sort(rows.begin(), rows.end(), [&](std::uint32_t a, std::uint32_t b) {
    return d.keys[a] != d.keys[b] ? d.keys[a] < d.keys[b] : a < b;
  });
  RandomForest forest;
  forest.params = params;
  forest.n_features = d.n_features;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  parallel_for(forest.trees.size(), jobs, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    const auto counts = bootstrap_counts(rows.size(), rng);
    std::vector<std::uint32_t> ids, w;
    ids.reserve(rows.size());
    w.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (counts[i]) {
        ids.push_back(rows[i]);
        w.push_back(counts[i]);
      }
    forest.trees[t] = train_tree(d, std::move(ids), std::move(w), params, rng);
  });
  return forest;
}

// Forest file: "NODEFRF1", u32 version, u64 header length, JSON header, then
// per tree u32 n_nodes and the nodes (i32 feature, f64 threshold, i32 left,
// i32 right, u32 count_safe, u32 count_fail), little-endian.

inline constexpr char kForestMagic[8] = {'N', 'O', 'D', 'E', 'F', 'R', 'F', '1'};
inline constexpr std::uint32_t kForestVersion = 1;

inline std::string serialize_forest(const RandomForest& f, const nlohmann::json& extra = nlohmann::json::object()) {
  static_assert(std::endian::native == std::endian::little);
  nlohmann::json header{{"params", f.params},
                        {"seed", f.params.seed},
                        {"n_features", f.n_features},
                        {"columns", f.columns},
                        {"n_trees", f.trees.size()},
                        {"metadata", extra}};
  const std::string h = header.dump();
  std::string out(kForestMagic, sizeof kForestMagic);
  auto put = [&](const auto& v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(kForestVersion);
  put(static_cast<std::uint64_t>(h.size()));
  out += h;
  for (const auto& t : f.trees) {
    put(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      put(n.feature);
      put(n.threshold);
      put(n.left);
      put(n.right);
      put(n.count_safe);
      put(n.count_fail);
    }
  }
  return out;
}

inline RandomForest deserialize_forest(std::string_view data) {
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > data.size()) throw InputError("truncated forest file");
    std::memcpy(dst, data.data() + pos, n);
    pos += n;
  };
  char magic[8];
  take(magic, sizeof magic);
  if (std::memcmp(magic, kForestMagic, sizeof magic) != 0) throw InputError("not a forest file");
  std::uint32_t version = 0;
  take(&version, sizeof version);
  if (version != kForestVersion) throw InputError("unsupported forest version " + std::to_string(version));
  std::uint64_t hlen = 0;
  take(&hlen, sizeof hlen);
  if (pos + hlen > data.size()) throw InputError("truncated forest header");
  RandomForest f;
  try {
    const auto header = nlohmann::json::parse(data.substr(pos, hlen));
    f.params = header.at("params").get<ForestParams>();
    f.n_features = header.at("n_features").get<std::size_t>();
    f.columns = header.at("columns").get<std::vector<std::string>>();
    f.trees.resize(header.at("n_trees").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad forest header: ") + e.what());
  }
  pos += hlen;
  for (auto& t : f.trees) {
    std::uint32_t n = 0;
    take(&n, sizeof n);
    t.nodes.resize(n);
    for (auto& node : t.nodes) {
      take(&node.feature, sizeof node.feature);
      take(&node.threshold, sizeof node.threshold);
      take(&node.left, sizeof node.left);
      take(&node.right, sizeof node.right);
      take(&node.count_safe, sizeof node.count_safe);
      take(&node.count_fail, sizeof node.count_fail);
    }
    for (const auto& node : t.nodes) {
      if (node.is_leaf()) continue;
      if (node.feature >= static_cast<std::int32_t>(f.n_features) || node.left < 0 || node.right < 0 ||
          node.left >= static_cast<std::int32_t>(n) || node.right >= static_cast<std::int32_t>(n))
        throw InputError("corrupt forest node");
    }
  }
  if (pos != data.size()) throw InputError("trailing bytes in forest file");
  return f;
}

inline void save_forest(const std::filesystem::path& path, const RandomForest& f,
                        const nlohmann::json& extra = nlohmann::json::object()) {
  const std::string bytes = serialize_forest(f, extra);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline RandomForest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_forest(data);
}

}  // namespace nodefail
