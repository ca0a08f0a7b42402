#pragma once

// Threshold-sweep metrics over scored points. A point is classified FAIL when
// its normalized score s' >= s*. Curves are swept over the distinct realized
// scores in descending order and start at s* = +inf (nothing flagged).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodefail/common.hpp"
#include "nodefail/ensemble.hpp"
#include "nodefail/trace.hpp"

namespace nodefail {

inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

struct CurvePoint {
  double threshold = kNoThreshold;
  double x = 0;
  double y = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
};

/// ROC: x = FPR, y = TPR. PR: x = recall, y = precision.
struct Curve {
  std::vector<CurvePoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

namespace detail {

/// (threshold, tp, fp) after flagging every point with score >= threshold,
/// for each distinct score, preceded by the empty +inf point.
inline std::vector<CurvePoint> sweep(std::span<const ScoredPoint> points, std::size_t& pos, std::size_t& neg) {
  pos = neg = 0;
  for (const auto& p : points) (p.label ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw InputError("curve needs at least one FAIL and one SAFE point (got " + std::to_string(pos) + " FAIL, " +
                     std::to_string(neg) + " SAFE)");
  std::vector<std::pair<double, std::uint8_t>> s;
  s.reserve(points.size());
  for (const auto& p : points) s.emplace_back(p.score, p.label);
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<CurvePoint> out{{kNoThreshold, 0, 0, 0, 0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < s.size();) {
    const double thr = s[i].first;
    for (; i < s.size() && s[i].first == thr; ++i) (s[i].second ? tp : fp)++;
    out.push_back({thr, 0, 0, tp, fp});
  }
  return out;
}

}  // namespace detail

inline Curve roc_curve(std::span<const ScoredPoint> points) {
  Curve c;
  c.points = detail::sweep(points, c.positives, c.negatives);
  for (auto& p : c.points) {
    p.x = static_cast<double>(p.fp) / static_cast<double>(c.negatives);
    p.y = static_cast<double>(p.tp) / static_cast<double>(c.positives);
  }
  return c;
}

/// Precision at the empty +inf point is taken as 1.
inline Curve pr_curve(std::span<const ScoredPoint> points) {
  Curve c;
  c.points = detail::sweep(points, c.positives, c.negatives);
  for (auto& p : c.points) {
    p.x = static_cast<double>(p.tp) / static_cast<double>(c.positives);
    p.y = p.tp + p.fp ? static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp) : 1.0;
  }
  return c;
}

/// Trapezoidal area over the curve's x axis.
inline double area_under(const Curve& c) {
  double a = 0;
  for (std::size_t i = 1; i < c.points.size(); ++i)
    a += (c.points[i].x - c.points[i - 1].x) * (c.points[i].y + c.points[i - 1].y) * 0.5;
  return a;
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool operator==(const Confusion&) const = default;
};

inline Confusion confusion_at(std::span<const ScoredPoint> points, double threshold) {
  Confusion c;
  for (const auto& p : points) {
    const bool flag = p.score >= threshold;
    if (p.label)
      (flag ? c.tp : c.fn)++;
    else
      (flag ? c.fp : c.tn)++;
  }
  return c;
}

struct OperatingPoint {
  double fpr_target = 0;
  double threshold = kNoThreshold;
  Confusion confusion;
  double fpr = 0;
  double tpr = 0;
  double precision = 0;  // 0 when nothing is flagged
  bool trivial = false;  // only the flag-nothing point meets the target
};

/// Highest TPR among realized thresholds with FPR <= target; ties go to the
/// higher threshold.
inline OperatingPoint operating_point(const Curve& roc, double fpr_target) {
  const CurvePoint* best = &roc.points.front();
  for (const auto& p : roc.points)
    if (p.x <= fpr_target && p.y > best->y) best = &p;
  OperatingPoint op;
  op.fpr_target = fpr_target;
  op.threshold = best->threshold;
  op.confusion = {best->tp, best->fp, roc.negatives - best->fp, roc.positives - best->tp};
  op.fpr = best->x;
  op.tpr = best->y;
  op.precision = best->tp + best->fp ? static_cast<double>(best->tp) / static_cast<double>(best->tp + best->fp) : 0.0;
  op.trivial = best->threshold == kNoThreshold;
  return op;
}

/// Order statistics of one outcome population, in hours.
struct Quartiles {
  std::size_t count = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Linear-interpolation quantile (type 7) of sorted values.
inline double quantile_sorted(std::span<const double> v, double q) {
  if (v.empty()) return 0;
  const double h = (static_cast<double>(v.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Quartiles summarize(std::vector<double> v) {
  Quartiles q;
  q.count = v.size();
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  q.min = v.front();
  q.q1 = quantile_sorted(v, 0.25);
  q.median = quantile_sorted(v, 0.5);
  q.q3 = quantile_sorted(v, 0.75);
  q.max = v.back();
  return q;
}

inline constexpr std::array<std::string_view, 4> kOutcomeNames{"TP", "FN", "TN", "FP"};

/// Time to the next confirmed failure per outcome at one threshold. SAFE
/// points without a later failure are left out of TN and FP.
struct TtfDiagnostics {
  double threshold = kNoThreshold;
  std::array<Quartiles, 4> outcomes;  // TP, FN, TN, FP
  std::array<std::vector<double>, 4> hours;
};

inline TtfDiagnostics ttf_diagnostics(std::span<const ScoredPoint> points, double threshold) {
  TtfDiagnostics d;
  d.threshold = threshold;
  for (const auto& p : points) {
    if (p.time_to_failure_us < 0) continue;
    const bool flag = p.score >= threshold;
    const std::size_t o = p.label ? (flag ? 0 : 1) : (flag ? 3 : 2);
    d.hours[o].push_back(static_cast<double>(p.time_to_failure_us) / static_cast<double>(kHour));
  }
  for (std::size_t o = 0; o < 4; ++o) d.outcomes[o] = summarize(d.hours[o]);
  return d;
}

struct EventRecall {
  std::size_t events = 0;   // failures with at least one scored FAIL point
  std::size_t flagged = 0;  // of those, flagged at least once
  std::optional<double> recall;
};

/// FAIL points are attributed to the failure at (machine, t + time_to_failure).
inline EventRecall event_level_recall(std::span<const ScoredPoint> points, double threshold, Micros epoch_length) {
  std::map<std::pair<std::uint32_t, Micros>, bool> events;
  for (const auto& p : points) {
    if (!p.label || p.time_to_failure_us < 0) continue;
    const auto machine = static_cast<std::uint32_t>(p.key >> 32);
    const auto epoch = static_cast<std::int32_t>(p.key & 0xFFFFFFFFu);
    const Micros at = static_cast<Micros>(epoch) * epoch_length + p.time_to_failure_us;
    auto& hit = events[{machine, at}];
    hit = hit || p.score >= threshold;
  }
  EventRecall r;
  r.events = events.size();
  for (const auto& [k, hit] : events) r.flagged += hit;
  if (r.events) r.recall = static_cast<double>(r.flagged) / static_cast<double>(r.events);
  return r;
}

struct EvalParams {
  std::vector<double> fpr_targets{0.01, 0.05, 0.10};
  double primary_fpr = 0.05;  // threshold used for diagnostics and event recall
  Micros epoch_length = 300 * kSecond;
};

struct EvalReport {
  std::size_t points = 0, positives = 0, negatives = 0;
  double auroc = 0, aupr = 0;
  Curve roc, pr;
  std::vector<OperatingPoint> operating_points;
  std::vector<EventRecall> event_recall;  // per operating point
  OperatingPoint primary;
  EventRecall primary_event_recall;
  TtfDiagnostics ttf;
};

inline EvalReport evaluate(std::span<const ScoredPoint> points, const EvalParams& p = {}) {
  EvalReport r;
  r.points = points.size();
  r.roc = roc_curve(points);
  r.pr = pr_curve(points);
  r.positives = r.roc.positives;
  r.negatives = r.roc.negatives;
  r.auroc = area_under(r.roc);
  r.aupr = area_under(r.pr);
  for (double t : p.fpr_targets) {
    r.operating_points.push_back(operating_point(r.roc, t));
    r.event_recall.push_back(event_level_recall(points, r.operating_points.back().threshold, p.epoch_length));
  }
  r.primary = operating_point(r.roc, p.primary_fpr);
  r.primary_event_recall = event_level_recall(points, r.primary.threshold, p.epoch_length);
  r.ttf = ttf_diagnostics(points, r.primary.threshold);
  return r;
}

inline nlohmann::json threshold_json(double t) { return t == kNoThreshold ? nlohmann::json(nullptr) : nlohmann::json(t); }

inline nlohmann::json to_json(const OperatingPoint& op) {
  return {{"fpr_target", op.fpr_target},
          {"threshold", threshold_json(op.threshold)},
          {"tp", op.confusion.tp},
          {"fp", op.confusion.fp},
          {"tn", op.confusion.tn},
          {"fn", op.confusion.fn},
          {"fpr", op.fpr},
          {"tpr", op.tpr},
          {"precision", op.precision},
          {"trivial", op.trivial}};
}

inline nlohmann::json to_json(const EventRecall& e) {
  return {{"events", e.events},
          {"flagged", e.flagged},
          {"recall", e.recall ? nlohmann::json(*e.recall) : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const Quartiles& q) {
  if (q.count == 0) return {{"count", 0}};
  return {{"count", q.count}, {"min", q.min}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"max", q.max}};
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json ops = nlohmann::json::array();
  for (std::size_t i = 0; i < r.operating_points.size(); ++i) {
    auto j = to_json(r.operating_points[i]);
    j["event_recall"] = to_json(r.event_recall[i]);
    ops.push_back(std::move(j));
  }
  nlohmann::json ttf = nlohmann::json::object();
  for (std::size_t o = 0; o < 4; ++o) ttf[std::string(kOutcomeNames[o])] = to_json(r.ttf.outcomes[o]);
  auto primary = to_json(r.primary);
  primary["event_recall"] = to_json(r.primary_event_recall);
  return {{"points", r.points},
          {"positives", r.positives},
          {"negatives", r.negatives},
          {"auroc", r.auroc},
          {"aupr", r.aupr},
          {"aupr_method", "trapezoidal"},
          {"operating_points", ops},
          {"primary", primary},
          {"ttf_hours", ttf},
          {"ttf_measure", "time to next confirmed failure"}};
}

inline std::string curve_csv(const Curve& c, std::string_view x, std::string_view y) {
  std::string out = "threshold," + std::string(x) + "," + std::string(y) + ",tp,fp\n";
  for (const auto& p : c.points) {
    if (p.threshold == kNoThreshold)
      out += "inf";
    else
      detail::append_double(out, p.threshold);
    out += ',';
    detail::append_double(out, p.x);
    out += ',';
    detail::append_double(out, p.y);
    out += ',';
    detail::append_int(out, static_cast<std::int64_t>(p.tp));
    out += ',';
    detail::append_int(out, static_cast<std::int64_t>(p.fp));
    out += '\n';
  }
  return out;
}

inline std::string ttf_csv(const TtfDiagnostics& d) {
  std::string out = "outcome,count,min_h,q1_h,median_h,q3_h,max_h\n";
  for (std::size_t o = 0; o < 4; ++o) {
    const auto& q = d.outcomes[o];
    out += kOutcomeNames[o];
    out += ',';
    detail::append_int(out, static_cast<std::int64_t>(q.count));
    for (double v : {q.min, q.q1, q.median, q.q3, q.max}) {
      out += ',';
      if (q.count) detail::append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

inline std::string scores_csv(std::span<const ScoredPoint> points) {
  std::string out = "machine,epoch,raw_score,score,class,time_to_remove_us,time_to_failure_us\n";
  for (const auto& p : points) {
    detail::append_int(out, static_cast<std::int64_t>(p.key >> 32));
    out += ',';
    detail::append_int(out, static_cast<std::int64_t>(p.key & 0xFFFFFFFFu));
    out += ',';
    detail::append_double(out, p.raw);
    out += ',';
    detail::append_double(out, p.score);
    out += ',';
    detail::append_int(out, p.label);
    out += ',';
    detail::append_int(out, p.time_to_remove_us);
    out += ',';
    detail::append_int(out, p.time_to_failure_us);
    out += '\n';
  }
  return out;
}

/// report.json, roc.csv, pr.csv, ttf.csv and scores.csv in `dir`.
inline void write_evaluation(const std::filesystem::path& dir, const EvalReport& r,
                             std::span<const ScoredPoint> points, const nlohmann::json& extra = nullptr) {
  std::filesystem::create_directories(dir);
  auto j = report_json(r);
  if (!extra.is_null()) j["run"] = extra;
  write_text_file(dir / "report.json", j.dump(2) + "\n");
  write_text_file(dir / "roc.csv", curve_csv(r.roc, "fpr", "tpr"));
  write_text_file(dir / "pr.csv", curve_csv(r.pr, "recall", "precision"));
  write_text_file(dir / "ttf.csv", ttf_csv(r.ttf));
  write_text_file(dir / "scores.csv", scores_csv(points));
}

}  // namespace nodefail
