#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "support.hpp"

namespace nodefail {
namespace {

std::vector<ScoredPoint> points_of(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::vector<ScoredPoint> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    ScoredPoint p;
    p.key = point_key(0, static_cast<std::int32_t>(i));
    p.score = p.raw = scores[i];
    p.label = labels[i];
    out.push_back(p);
  }
  return out;
}

TEST(Roc, FourPointFixture) {
  const auto pts = points_of({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  const auto roc = roc_curve(pts);
  const std::vector<std::pair<double, double>> want{{0, 0}, {0, 0.5}, {0.5, 0.5}, {0.5, 1}, {1, 1}};
  ASSERT_EQ(roc.points.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(roc.points[i].x, want[i].first) << i;
    EXPECT_EQ(roc.points[i].y, want[i].second) << i;
  }
  EXPECT_EQ(roc.points[0].threshold, kNoThreshold);
  EXPECT_EQ(roc.points[1].threshold, 0.9);
  EXPECT_DOUBLE_EQ(area_under(roc), 0.75);
}

struct Fixture {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

// Scores on a grid of `levels` values so that ties are common; positives
// drawn higher on average.
Fixture random_fixture(std::size_t n, int levels, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> lvl(0, levels - 1);
  std::bernoulli_distribution pos(0.3);
  Fixture f;
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = i == 0 || (i != 1 && pos(g));
    int s = lvl(g);
    if (p) s = std::min(levels - 1, s + levels / 4);
    f.scores.push_back(static_cast<double>(s) / levels);
    f.labels.push_back(p);
  }
  return f;
}

TEST(Roc, MatchesPerThresholdRecount) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (int levels : {5, 40, 100000}) {
      const auto f = random_fixture(1000, levels, seed);
      const auto roc = roc_curve(points_of(f.scores, f.labels));
      const auto want = oracle::roc_by_recount(f.scores, f.labels);
      ASSERT_EQ(roc.points.size(), want.size() + 1);
      for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(roc.points[i + 1].threshold, want[i].threshold);
        EXPECT_EQ(roc.points[i + 1].x, want[i].fpr);
        EXPECT_EQ(roc.points[i + 1].y, want[i].tpr);
      }
      EXPECT_NEAR(area_under(roc), oracle::auc_by_pairs(f.scores, f.labels), 1e-12);
    }
  }
}

TEST(Roc, PerfectScorerHasAreaOne) {
  const auto pts = points_of({0.1, 0.2, 0.3, 0.8, 0.9}, {0, 0, 0, 1, 1});
  EXPECT_EQ(area_under(roc_curve(pts)), 1.0);
}

TEST(Roc, ConstantScoresHaveAreaOneHalf) {
  const auto pts = points_of({0.4, 0.4, 0.4, 0.4, 0.4}, {0, 1, 0, 1, 1});
  EXPECT_EQ(area_under(roc_curve(pts)), 0.5);
}

TEST(Roc, RandomScoresNearOneHalf) {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::bernoulli_distribution b(0.2);
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  for (int i = 0; i < 10000; ++i) {
    s.push_back(u(g));
    l.push_back(b(g));
  }
  EXPECT_NEAR(area_under(roc_curve(points_of(s, l))), 0.5, 0.05);
}

TEST(Roc, MonotoneTransformKeepsArea) {
  const auto f = random_fixture(800, 50, 9);
  std::vector<double> cubed;
  for (double s : f.scores) cubed.push_back(s * s * s);
  EXPECT_NEAR(area_under(roc_curve(points_of(f.scores, f.labels))),
              area_under(roc_curve(points_of(cubed, f.labels))), 1e-12);
}

TEST(Roc, ConfusionAddsUpAtEveryThreshold) {
  const auto f = random_fixture(500, 30, 10);
  const auto pts = points_of(f.scores, f.labels);
  const auto roc = roc_curve(pts);
  for (const auto& p : roc.points) {
    const auto c = confusion_at(pts, p.threshold);
    EXPECT_EQ(c.tp + c.fn, roc.positives);
    EXPECT_EQ(c.fp + c.tn, roc.negatives);
    EXPECT_EQ(c.tp, p.tp);
    EXPECT_EQ(c.fp, p.fp);
  }
}

TEST(Roc, SingleClassIsInputError) {
  EXPECT_THROW(roc_curve(points_of({0.1, 0.2}, {1, 1})), InputError);
  EXPECT_THROW(roc_curve(points_of({0.1, 0.2}, {0, 0})), InputError);
  EXPECT_THROW(pr_curve(points_of({}, {})), InputError);
}

TEST(Pr, StartsAtPrecisionOneAndEndsAtBaseRate) {
  const auto pts = points_of({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  const auto pr = pr_curve(pts);
  EXPECT_EQ(pr.points.front().x, 0.0);
  EXPECT_EQ(pr.points.front().y, 1.0);
  EXPECT_EQ(pr.points.back().x, 1.0);
  EXPECT_EQ(pr.points.back().y, 0.5);
  EXPECT_EQ(pr.points[2].y, 0.5);  // threshold 0.8: one TP, one FP
}

TEST(OperatingPoint, BestTprUnderFprTarget) {
  const auto f = random_fixture(1000, 200, 11);
  const auto roc = roc_curve(points_of(f.scores, f.labels));
  for (double target : {0.0, 0.01, 0.05, 0.1, 0.5}) {
    const auto op = operating_point(roc, target);
    EXPECT_LE(op.fpr, target);
    double best = 0;
    for (const auto& p : roc.points)
      if (p.x <= target) best = std::max(best, p.y);
    EXPECT_EQ(op.tpr, best) << target;
    EXPECT_EQ(op.confusion.tp + op.confusion.fn, roc.positives);
  }
}

TEST(OperatingPoint, TiesGoToTheHigherThreshold) {
  // Thresholds 0.9 and 0.8 both reach TPR 1 within FPR 0.7.
  const auto tied = points_of({0.9, 0.8, 0.8, 0.1}, {1, 0, 0, 0});
  const auto op = operating_point(roc_curve(tied), 0.7);
  EXPECT_EQ(op.threshold, 0.9);
  EXPECT_EQ(op.fpr, 0.0);
  EXPECT_EQ(op.tpr, 1.0);
}

TEST(OperatingPoint, TrivialWhenOnlyFlagNothingFits) {
  const auto pts = points_of({0.9, 0.8, 0.1}, {0, 1, 0});
  const auto op = operating_point(roc_curve(pts), 0.1);
  EXPECT_TRUE(op.trivial);
  EXPECT_EQ(op.threshold, kNoThreshold);
  EXPECT_EQ(op.tpr, 0.0);
  EXPECT_EQ(op.precision, 0.0);
}

TEST(OperatingPoint, PerfectScorerReachesFullRecallAtZeroFpr) {
  const auto pts = points_of({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1});
  const auto op = operating_point(roc_curve(pts), 0.01);
  EXPECT_EQ(op.tpr, 1.0);
  EXPECT_EQ(op.fpr, 0.0);
  EXPECT_EQ(op.threshold, 0.8);
  EXPECT_EQ(op.precision, 1.0);
  EXPECT_FALSE(op.trivial);
}

TEST(Quantiles, LinearInterpolation) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 4.0);
  const auto q = summarize({5, 1, 3});
  EXPECT_EQ(q.count, 3u);
  EXPECT_EQ(q.min, 1);
  EXPECT_EQ(q.median, 3);
  EXPECT_EQ(q.max, 5);
  EXPECT_EQ(summarize({}).count, 0u);
}

ScoredPoint with_ttf(double score, std::uint8_t label, double ttf_hours, std::uint32_t machine = 0,
                     std::int32_t epoch = 0) {
  ScoredPoint p;
  p.key = point_key(machine, epoch);
  p.score = score;
  p.label = label;
  p.time_to_failure_us = ttf_hours < 0 ? -1 : static_cast<std::int64_t>(ttf_hours * static_cast<double>(kHour));
  return p;
}

TEST(TtfDiagnostics, GroupsByOutcomeAndSkipsPointsWithoutFailure) {
  const std::vector<ScoredPoint> pts{with_ttf(0.9, 1, 2), with_ttf(0.8, 1, 4), with_ttf(0.2, 1, 20),
                                     with_ttf(0.1, 0, 100), with_ttf(0.95, 0, 50), with_ttf(0.9, 0, -1)};
  const auto d = ttf_diagnostics(pts, 0.5);
  EXPECT_EQ(d.outcomes[0].count, 2u);  // TP
  EXPECT_EQ(d.outcomes[0].median, 3.0);
  EXPECT_EQ(d.outcomes[1].count, 1u);  // FN
  EXPECT_EQ(d.outcomes[1].median, 20.0);
  EXPECT_EQ(d.outcomes[2].count, 1u);  // TN
  EXPECT_EQ(d.outcomes[3].count, 1u);  // FP without ttf is not counted
  EXPECT_EQ(d.outcomes[3].max, 50.0);
  EXPECT_EQ(kOutcomeNames[1], "FN");
}

TEST(TtfDiagnostics, NoFalseNegativesWhenAllPositivesFlagged) {
  const std::vector<ScoredPoint> pts{with_ttf(0.9, 1, 2), with_ttf(0.8, 1, 4), with_ttf(0.1, 0, 30)};
  EXPECT_EQ(ttf_diagnostics(pts, 0.8).outcomes[1].count, 0u);
}

TEST(EventRecall, GroupsPointsByFailure) {
  const Micros epoch = 300 * kSecond;
  // Machine 1 fails at epoch 100; points at epochs 90 and 95 belong to it.
  // Machine 2 fails at epoch 200: one unflagged point.
  auto ttf_to = [&](std::int32_t from, std::int32_t to) { return static_cast<double>((to - from) * epoch) / kHour; };
  std::vector<ScoredPoint> pts{with_ttf(0.2, 1, ttf_to(90, 100), 1, 90), with_ttf(0.9, 1, ttf_to(95, 100), 1, 95),
                               with_ttf(0.1, 1, ttf_to(150, 200), 2, 150), with_ttf(0.9, 0, -1, 3, 10)};
  auto r = event_level_recall(pts, 0.5, epoch);
  EXPECT_EQ(r.events, 2u);
  EXPECT_EQ(r.flagged, 1u);
  ASSERT_TRUE(r.recall.has_value());
  EXPECT_EQ(*r.recall, 0.5);

  r = event_level_recall(pts, 0.05, epoch);
  EXPECT_EQ(*r.recall, 1.0);

  // At any threshold event recall is at least the share of failures whose
  // points are all flagged (here machine 1 once 0.2 is reached, machine 2
  // never above 0.1).
  for (double thr : {0.05, 0.15, 0.2, 0.5, 0.95}) {
    const double all_flagged = (thr <= 0.2 ? 1.0 : 0.0) + (thr <= 0.1 ? 1.0 : 0.0);
    EXPECT_GE(*event_level_recall(pts, thr, epoch).recall, all_flagged / 2) << thr;
  }
}

TEST(EventRecall, AbsentWithoutEvents) {
  const std::vector<ScoredPoint> pts{with_ttf(0.9, 0, 3), with_ttf(0.1, 0, -1)};
  const auto r = event_level_recall(pts, 0.5, 300 * kSecond);
  EXPECT_EQ(r.events, 0u);
  EXPECT_FALSE(r.recall.has_value());
}

TEST(Evaluate, ReportCarriesAllPieces) {
  const auto f = random_fixture(600, 60, 12);
  auto pts = points_of(f.scores, f.labels);
  for (auto& p : pts)
    if (p.label) p.time_to_failure_us = 3 * kHour;
  EvalParams params;
  const auto r = evaluate(pts, params);
  EXPECT_EQ(r.points, pts.size());
  EXPECT_EQ(r.positives + r.negatives, pts.size());
  EXPECT_EQ(r.operating_points.size(), params.fpr_targets.size());
  EXPECT_EQ(r.event_recall.size(), params.fpr_targets.size());
  EXPECT_EQ(r.primary.fpr_target, 0.05);
  EXPECT_NEAR(r.auroc, oracle::auc_by_pairs(f.scores, f.labels), 1e-12);
  const auto j = report_json(r);
  for (const char* k : {"auroc", "aupr", "operating_points", "primary", "ttf_hours", "points"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["ttf_hours"].size(), 4u);
  EXPECT_EQ(j["operating_points"].size(), 3u);
}

TEST(Evaluate, CurveCsvListsEveryPoint) {
  const auto pts = points_of({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  const std::string csv = curve_csv(roc_curve(pts), "fpr", "tpr");
  EXPECT_EQ(csv.rfind("threshold,fpr,tpr,tp,fp\ninf,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

}  // namespace
}  // namespace nodefail
