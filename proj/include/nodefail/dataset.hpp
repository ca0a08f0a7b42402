#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "nodefail/features.hpp"

namespace nodefail {

/// Column-major feature table with one binary label and one sort key per row.
struct Dataset {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<float> columns;        // n_features x n_rows
  std::vector<std::uint8_t> labels;  // 1 = FAIL
  std::vector<std::uint64_t> keys;   // canonical row order

  Dataset() = default;
  Dataset(std::size_t rows, std::size_t features)
      : n_rows(rows), n_features(features), columns(rows * features), labels(rows), keys(rows) {}

  std::span<const float> column(std::size_t f) const { return {columns.data() + f * n_rows, n_rows}; }
  float value(std::size_t row, std::size_t f) const { return columns[f * n_rows + row]; }
  float& at(std::size_t row, std::size_t f) { return columns[f * n_rows + row]; }
};

inline std::uint64_t point_key(std::uint32_t machine, std::int32_t epoch) {
  return (std::uint64_t{machine} << 32) | static_cast<std::uint32_t>(epoch);
}

/// Labeled points of a whole trace with their identities, ready for
/// benchmark slicing. Row r has key point_key(machine[r], epoch[r]).
struct BaseDataset {
  MatrixMeta meta;
  Dataset data;
  std::vector<std::uint32_t> machine;
  std::vector<std::int32_t> epoch;
  std::vector<std::int64_t> time_to_remove_us;
  std::vector<std::int64_t> time_to_failure_us;

  std::size_t rows() const { return data.n_rows; }
  Micros time_of(std::size_t r) const { return static_cast<Micros>(epoch[r]) * meta.epoch_length; }
};

/// Collects labeled blocks row-major, then transposes once.
class BaseDatasetBuilder {
 public:
  explicit BaseDatasetBuilder(MatrixMeta meta) : meta_(std::move(meta)) {}

  void add(const FeatureBlock& b) {
    if (b.rows() == 0) return;
    if (!b.labeled()) throw std::runtime_error("base dataset needs labeled blocks");
    if (b.values.size() != b.rows() * meta_.columns.size())
      throw std::runtime_error("feature block does not match the column count");
    values_.insert(values_.end(), b.values.begin(), b.values.end());
    for (std::size_t r = 0; r < b.rows(); ++r) {
      machine_.push_back(b.machine);
      epoch_.push_back(b.epochs[r]);
    }
    labels_.insert(labels_.end(), b.classes.begin(), b.classes.end());
    ttr_.insert(ttr_.end(), b.time_to_remove_us.begin(), b.time_to_remove_us.end());
    ttf_.insert(ttf_.end(), b.time_to_failure_us.begin(), b.time_to_failure_us.end());
  }

  BaseDataset finish() {
    BaseDataset out;
    const std::size_t n = epoch_.size(), cols = meta_.columns.size();
    out.meta = std::move(meta_);
    out.data = Dataset(n, cols);
    for (std::size_t r = 0; r < n; ++r) {
      const float* src = values_.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) out.data.columns[c * n + r] = src[c];
      out.data.keys[r] = point_key(machine_[r], epoch_[r]);
    }
    out.data.labels = std::move(labels_);
    out.machine = std::move(machine_);
    out.epoch = std::move(epoch_);
    out.time_to_remove_us = std::move(ttr_);
    out.time_to_failure_us = std::move(ttf_);
    values_ = {};
    return out;
  }

 private:
  MatrixMeta meta_;
  std::vector<float> values_;
  std::vector<std::uint32_t> machine_;
  std::vector<std::int32_t> epoch_;
  std::vector<std::uint8_t> labels_;
  std::vector<std::int64_t> ttr_, ttf_;
};

inline BaseDataset make_base_dataset(const FeatureMatrix& m) {
  BaseDatasetBuilder b(m.meta);
  for (const auto& block : m.blocks) b.add(block);
  return b.finish();
}

}  // namespace nodefail
