#pragma once

// Columnar binary storage for feature matrices.
//
// File layout (little-endian):
//   "NODEFMX1"  u32 version  u32 n_columns  u32 n_coverage  u8 labeled
//   groups, one per machine:
//     u32 machine  u32 n_rows  i32 epoch[n_rows]
//     f32 column[n_columns][n_rows]  f32 coverage[n_coverage][n_rows]
//     labeled only: u8 class[n_rows]  i64 time_to_remove_us[n_rows]  i64 time_to_failure_us[n_rows]
//   u32 0xFFFFFFFF end marker
// A JSON sidecar (<path>.json) carries names, grid and counts.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodefail/common.hpp"
#include "nodefail/features.hpp"

namespace nodefail {

static_assert(std::endian::native == std::endian::little, "matrix files are written in host byte order");

inline constexpr char kMatrixMagic[8] = {'N', 'O', 'D', 'E', 'F', 'M', 'X', '1'};
inline constexpr std::uint32_t kMatrixVersion = 1;
inline constexpr std::uint32_t kMatrixEnd = 0xFFFFFFFFu;

inline const std::vector<std::string>& label_column_names() {
  static const std::vector<std::string> names{"class", "time_to_remove_us", "time_to_failure_us"};
  return names;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& matrix) {
  return matrix.string() + ".json";
}

namespace detail {

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void write_array(std::ostream& out, const T* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
T read_pod(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InputError("truncated file while reading " + what);
  return v;
}

template <class T>
void read_array(std::istream& in, T* data, std::size_t n, const std::string& what) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw InputError("truncated file while reading " + what);
}

}  // namespace detail

/// Streams blocks to a matrix file; the sidecar is written by finish().
class MatrixWriter {
 public:
  MatrixWriter(std::filesystem::path path, MatrixMeta meta, bool labeled, nlohmann::json extra = nlohmann::json::object())
      : path_(std::move(path)), meta_(std::move(meta)), labeled_(labeled), extra_(std::move(extra)),
        out_(path_, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path_.string());
    out_.write(kMatrixMagic, sizeof kMatrixMagic);
    detail::write_pod(out_, kMatrixVersion);
    detail::write_pod(out_, static_cast<std::uint32_t>(meta_.columns.size()));
    detail::write_pod(out_, static_cast<std::uint32_t>(meta_.coverage_columns.size()));
    detail::write_pod(out_, static_cast<std::uint8_t>(labeled_));
  }

  void write(const FeatureBlock& b) {
    const std::size_t n = b.rows();
    const std::size_t cols = meta_.columns.size(), nw = meta_.coverage_columns.size();
    if (b.values.size() != n * cols || b.coverage.size() != n * nw)
      throw std::runtime_error("feature block does not match the matrix column count");
    if (labeled_ && (b.classes.size() != n || b.time_to_remove_us.size() != n || b.time_to_failure_us.size() != n))
      throw std::runtime_error("labeled matrix given an unlabeled block");
    detail::write_pod(out_, b.machine);
    detail::write_pod(out_, static_cast<std::uint32_t>(n));
    detail::write_array(out_, b.epochs.data(), n);
    std::vector<float> column(n);
    auto put_columns = [&](const std::vector<float>& src, std::size_t width) {
      for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t r = 0; r < n; ++r) column[r] = src[r * width + c];
        detail::write_array(out_, column.data(), n);
      }
    };
    put_columns(b.values, cols);
    put_columns(b.coverage, nw);
    if (labeled_) {
      detail::write_array(out_, b.classes.data(), n);
      detail::write_array(out_, b.time_to_remove_us.data(), n);
      detail::write_array(out_, b.time_to_failure_us.data(), n);
      for (auto c : b.classes) (c ? fail_rows_ : safe_rows_)++;
    }
    rows_ += n;
    ++groups_;
  }

  void finish() {
    detail::write_pod(out_, kMatrixEnd);
    out_.close();
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
    nlohmann::json j;
    j["format"] = "NODEFMX1";
    j["version"] = kMatrixVersion;
    j["columns"] = meta_.columns;
    j["aux_columns"] = meta_.coverage_columns;
    j["label_columns"] = labeled_ ? label_column_names() : std::vector<std::string>{};
    j["epoch_seconds"] = meta_.epoch_length / kSecond;
    j["trace_start_us"] = 0;
    j["trace_end_us"] = meta_.trace_end;
    j["n_epochs"] = meta_.n_epochs;
    j["machines"] = meta_.machines;
    j["rows"] = rows_;
    j["groups"] = groups_;
    if (labeled_) {
      j["fail_rows"] = fail_rows_;
      j["safe_rows"] = safe_rows_;
    }
    j["metadata"] = extra_;
    write_text_file(sidecar_path(path_), j.dump(2) + "\n");
  }

  std::size_t rows() const { return rows_; }

 private:
  std::filesystem::path path_;
  MatrixMeta meta_;
  bool labeled_;
  nlohmann::json extra_;
  std::ofstream out_;
  std::size_t rows_ = 0, groups_ = 0, fail_rows_ = 0, safe_rows_ = 0;
};

inline nlohmann::json read_sidecar(const std::filesystem::path& matrix) {
  std::ifstream in(sidecar_path(matrix));
  if (!in) throw InputError("cannot open " + sidecar_path(matrix).string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad matrix sidecar " + sidecar_path(matrix).string() + ": " + e.what());
  }
}

/// Reads blocks back one machine group at a time.
class MatrixReader {
 public:
  explicit MatrixReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw InputError("cannot open " + path.string());
    sidecar_ = read_sidecar(path);
    try {
      meta_.columns = sidecar_.at("columns").get<std::vector<std::string>>();
      meta_.coverage_columns = sidecar_.at("aux_columns").get<std::vector<std::string>>();
      meta_.machines = sidecar_.at("machines").get<std::vector<std::string>>();
      meta_.epoch_length = sidecar_.at("epoch_seconds").get<std::int64_t>() * kSecond;
      meta_.trace_end = sidecar_.at("trace_end_us").get<std::int64_t>();
      meta_.n_epochs = sidecar_.at("n_epochs").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError("incomplete matrix sidecar for " + path.string() + ": " + e.what());
    }

    char magic[8];
    in_.read(magic, sizeof magic);
    if (!in_ || std::memcmp(magic, kMatrixMagic, sizeof magic) != 0)
      throw InputError(path.string() + " is not a feature matrix file");
    if (detail::read_pod<std::uint32_t>(in_, "version") != kMatrixVersion)
      throw InputError(path.string() + ": unsupported matrix version");
    const auto cols = detail::read_pod<std::uint32_t>(in_, "header");
    const auto nw = detail::read_pod<std::uint32_t>(in_, "header");
    labeled_ = detail::read_pod<std::uint8_t>(in_, "header") != 0;
    if (cols != meta_.columns.size() || nw != meta_.coverage_columns.size())
      throw InputError(path.string() + ": header and sidecar disagree on column counts");
  }

  const MatrixMeta& meta() const { return meta_; }
  const nlohmann::json& sidecar() const { return sidecar_; }
  bool labeled() const { return labeled_; }

  /// Reads the next group; false at the end marker.
  bool next(FeatureBlock& b) {
    const auto machine = detail::read_pod<std::uint32_t>(in_, "group header");
    if (machine == kMatrixEnd) return false;
    if (machine >= meta_.machines.size()) throw InputError("matrix group references unknown machine");
    const auto n = detail::read_pod<std::uint32_t>(in_, "group header");
    const std::size_t cols = meta_.columns.size(), nw = meta_.coverage_columns.size();
    b = FeatureBlock{};
    b.machine = machine;
    b.epochs.resize(n);
    detail::read_array(in_, b.epochs.data(), n, "epochs");
    std::vector<float> column(n);
    auto get_columns = [&](std::vector<float>& dst, std::size_t width) {
      dst.resize(static_cast<std::size_t>(n) * width);
      for (std::size_t c = 0; c < width; ++c) {
        detail::read_array(in_, column.data(), n, "feature column");
        for (std::size_t r = 0; r < n; ++r) dst[r * width + c] = column[r];
      }
    };
    get_columns(b.values, cols);
    get_columns(b.coverage, nw);
    if (labeled_) {
      b.classes.resize(n);
      b.time_to_remove_us.resize(n);
      b.time_to_failure_us.resize(n);
      detail::read_array(in_, b.classes.data(), n, "class column");
      detail::read_array(in_, b.time_to_remove_us.data(), n, "time_to_remove column");
      detail::read_array(in_, b.time_to_failure_us.data(), n, "time_to_failure column");
    }
    return true;
  }

 private:
  std::ifstream in_;
  nlohmann::json sidecar_;
  MatrixMeta meta_;
  bool labeled_ = false;
};

inline void write_matrix(const std::filesystem::path& path, const FeatureMatrix& m, bool labeled,
                         nlohmann::json extra = nlohmann::json::object()) {
  MatrixWriter w(path, m.meta, labeled, std::move(extra));
  for (const auto& b : m.blocks) w.write(b);
  w.finish();
}

inline FeatureMatrix read_matrix(const std::filesystem::path& path) {
  MatrixReader r(path);
  FeatureMatrix m{r.meta(), {}};
  FeatureBlock b;
  while (r.next(b)) m.blocks.push_back(std::move(b));
  return m;
}

/// Row-per-point CSV for inspection: machine_id, epoch, features, coverage,
/// labels when present.
inline void export_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const bool labeled = !m.blocks.empty() && std::all_of(m.blocks.begin(), m.blocks.end(), [](const auto& b) {
    return b.rows() == 0 || b.labeled();
  });
  std::string line = "machine_id,epoch";
  for (const auto& c : m.meta.columns) line += "," + c;
  for (const auto& c : m.meta.coverage_columns) line += "," + c;
  if (labeled)
    for (const auto& c : label_column_names()) line += "," + c;
  out << line << '\n';
  const std::size_t cols = m.meta.columns.size(), nw = m.meta.coverage_columns.size();
  for (const auto& b : m.blocks) {
    for (std::size_t r = 0; r < b.rows(); ++r) {
      line = m.meta.machines.at(b.machine);
      line += ',';
      detail::append_int(line, b.epochs[r]);
      for (std::size_t c = 0; c < cols; ++c) {
        line += ',';
        detail::append_double(line, b.values[r * cols + c]);
      }
      for (std::size_t c = 0; c < nw; ++c) {
        line += ',';
        detail::append_double(line, b.coverage[r * nw + c]);
      }
      if (labeled) {
        line += ',';
        detail::append_int(line, b.classes[r]);
        line += ',';
        detail::append_int(line, b.time_to_remove_us[r]);
        line += ',';
        detail::append_int(line, b.time_to_failure_us[r]);
      }
      out << line << '\n';
    }
  }
}

}  // namespace nodefail
