#pragma once

// Sliding-window statistics over epoch series with missing values (NaN).
//
// Each window covers the `width` most recent epochs, current one included.
// Sums are kept relative to a shift value, re-centered whenever the window
// empties, and rebuilt from scratch once per `width` steps, so every update is O(1) amortized and rounding error cannot
// accumulate for more than one window length. Window min/max come from
// monotonic queues, which makes the "constant window" test exact.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace nodefail {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

namespace detail {
/// Largest accepted ratio of the shifted second moment to the centered one;
/// beyond it the window is re-centered exactly (about 3 digits of headroom).
inline constexpr double kMaxCancellation = 1e3;
}  // namespace detail

struct WindowSummary {
  double mean = 0;
  double sd = 0;  // population standard deviation
  double cv = 0;  // sd / mean, 0 when mean == 0
  std::uint32_t count = 0;
  bool constant = true;  // all available values equal (or none available)
};

namespace detail {

/// Fixed-capacity deque (power-of-two ring) of epoch indices used as a monotonic queue.
class IndexRing {
 public:
  explicit IndexRing(std::size_t capacity) : buf_(std::bit_ceil(capacity + 1)), mask_(buf_.size() - 1) {}
  bool empty() const { return size_ == 0; }
  std::size_t front() const { return buf_[head_]; }
  std::size_t back() const { return buf_[(head_ + size_ - 1) & mask_]; }
  void pop_front() {
    head_ = (head_ + 1) & mask_;
    --size_;
  }
  void pop_back() { --size_; }
  void push_back(std::size_t v) {
    buf_[(head_ + size_) & mask_] = v;
    ++size_;
  }

 private:
  std::vector<std::size_t> buf_;
  std::size_t mask_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

/// Sliding min and max of the available values.
class WindowRange {
 public:
  WindowRange(std::span<const double> series, std::size_t width)
      : series_(series), width_(width), min_(width), max_(width) {}

  void advance(std::size_t k) {
    const double v = series_[k];
    if (!is_missing(v)) {
      while (!min_.empty() && series_[min_.back()] >= v) min_.pop_back();
      min_.push_back(k);
      while (!max_.empty() && series_[max_.back()] <= v) max_.pop_back();
      max_.push_back(k);
    }
    while (!min_.empty() && min_.front() + width_ <= k) min_.pop_front();
    while (!max_.empty() && max_.front() + width_ <= k) max_.pop_front();
  }

  bool constant() const { return min_.empty() || series_[min_.front()] == series_[max_.front()]; }
  double min_value() const { return series_[min_.front()]; }

 private:
  std::span<const double> series_;
  std::size_t width_;
  IndexRing min_;
  IndexRing max_;
};

/// Exact shift and shifted sums of the window ending at k.
inline void recenter(std::span<const double> series, std::size_t k, std::size_t width, double& shift, double& s1,
                     double& s2, std::uint32_t& count) {
  const std::size_t lo = k + 1 >= width ? k + 1 - width : 0;
  double sum = 0;
  std::uint32_t c = 0;
  for (std::size_t i = lo; i <= k; ++i)
    if (!is_missing(series[i])) {
      sum += series[i];
      ++c;
    }
  shift = c ? sum / c : 0.0;
  s1 = s2 = 0;
  for (std::size_t i = lo; i <= k; ++i)
    if (!is_missing(series[i])) {
      const double d = series[i] - shift;
      s1 += d;
      s2 += d * d;
    }
  count = c;
}

}  // namespace detail

/// Mean / SD / CV of the available values in each window (k - width, k].
inline std::vector<WindowSummary> rolling_summary(std::span<const double> series, std::size_t width) {
  const std::size_t n = series.size();
  std::vector<WindowSummary> out(n);
  if (width == 0) return out;
  detail::WindowRange range(series, width);
  double shift = 0, s1 = 0, s2 = 0;
  std::uint32_t count = 0;
  std::size_t since_rebuild = 0;

  for (std::size_t k = 0; k < n; ++k) {
    const double in = series[k];
    if (!is_missing(in)) {
      if (count == 0) {
        // Empty window: re-center on the incoming value so a stale shift
        // cannot inflate the squared terms.
        shift = in;
        s1 = s2 = 0;
      }
      const double d = in - shift;
      s1 += d;
      s2 += d * d;
      ++count;
    }
    if (k >= width) {
      const double outv = series[k - width];
      if (!is_missing(outv)) {
        const double d = outv - shift;
        s1 -= d;
        s2 -= d * d;
        --count;
      }
    }
    range.advance(k);

    if (++since_rebuild >= width) {
      since_rebuild = 0;
      detail::recenter(series, k, width, shift, s1, s2, count);
    }

    WindowSummary& w = out[k];
    w.count = count;
    w.constant = range.constant();
    if (count == 0) continue;
    double mean_shifted = s1 / count;
    if (!w.constant) {
      double var = s2 / count - mean_shifted * mean_shifted;
      if (!(var * detail::kMaxCancellation > s2 / count)) {
        // The window mean drifted far from the shift relative to the spread;
        // re-center exactly before trusting the difference.
        since_rebuild = 0;
        detail::recenter(series, k, width, shift, s1, s2, count);
        mean_shifted = s1 / count;
        var = s2 / count - mean_shifted * mean_shifted;
      }
      w.mean = shift + mean_shifted;
      w.sd = var > 0 ? std::sqrt(var) : 0.0;
    } else {
      w.mean = range.min_value();
    }
    w.cv = w.mean != 0 ? w.sd / w.mean : 0.0;
  }
  return out;
}

/// Pearson correlation over paired available epochs of each window. Defined
/// as 0 when fewer than 3 pairs exist or either side is constant. The series
/// are expected to share their missing pattern; an epoch missing on either
/// side is skipped on both.
inline std::vector<double> rolling_pearson(std::span<const double> x, std::span<const double> y,
                                           std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  if (width == 0 || y.size() != n) return out;

  // Series restricted to paired epochs, so the range queues see the same set.
  std::vector<double> px(n), py(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool ok = !is_missing(x[k]) && !is_missing(y[k]);
    px[k] = ok ? x[k] : kMissing;
    py[k] = ok ? y[k] : kMissing;
  }
  detail::WindowRange rx(px, width), ry(py, width);
  double kx = 0, ky = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  std::uint32_t count = 0;
  std::size_t since_rebuild = 0;

  auto accumulate = [&](std::size_t i, double sign) {
    const double dx = px[i] - kx, dy = py[i] - ky;
    sx += sign * dx;
    sy += sign * dy;
    sxx += sign * dx * dx;
    syy += sign * dy * dy;
    sxy += sign * dx * dy;
  };

  auto rebuild = [&](std::size_t k) {
    const std::size_t lo = k + 1 >= width ? k + 1 - width : 0;
    double mx = 0, my = 0;
    std::uint32_t c = 0;
    for (std::size_t i = lo; i <= k; ++i)
      if (!is_missing(px[i])) {
        mx += px[i];
        my += py[i];
        ++c;
      }
    kx = c ? mx / c : 0.0;
    ky = c ? my / c : 0.0;
    sx = sy = sxx = syy = sxy = 0;
    for (std::size_t i = lo; i <= k; ++i)
      if (!is_missing(px[i])) accumulate(i, 1.0);
    count = c;
  };

  for (std::size_t k = 0; k < n; ++k) {
    if (!is_missing(px[k])) {
      if (count == 0) {
        kx = px[k];
        ky = py[k];
        sx = sy = sxx = syy = sxy = 0;
      }
      accumulate(k, 1.0);
      ++count;
    }
    if (k >= width && !is_missing(px[k - width])) {
      accumulate(k - width, -1.0);
      --count;
    }
    rx.advance(k);
    ry.advance(k);

    if (++since_rebuild >= width) {
      since_rebuild = 0;
      rebuild(k);
    }

    if (count < 3 || rx.constant() || ry.constant()) continue;
    double cxx = sxx - sx * sx / count;
    double cyy = syy - sy * sy / count;
    if (!(cxx * detail::kMaxCancellation > sxx) || !(cyy * detail::kMaxCancellation > syy)) {
      since_rebuild = 0;
      rebuild(k);
      cxx = sxx - sx * sx / count;
      cyy = syy - sy * sy / count;
    }
    const double cxy = sxy - sx * sy / count;
    if (!(cxx > 0) || !(cyy > 0)) continue;
    const double r = cxy / std::sqrt(cxx * cyy);
    out[k] = r > 1 ? 1.0 : (r < -1 ? -1.0 : r);
  }
  return out;
}

}  // namespace nodefail
