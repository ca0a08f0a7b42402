#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

namespace nodefail {
namespace {

using testing::add;
using testing::remove;

constexpr Micros E = 300 * kSecond;
constexpr Micros H = kHour;

TEST(IdentifyFailures, ThreeHourDownIsFailure) {
  const auto f = identify_failures({add(0), remove(100 * H), add(103 * H)});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].down_time, 3 * H);
  EXPECT_EQ(f[0].next_add_ts, 103 * H);
  EXPECT_TRUE(f[0].is_failure);
}

TEST(IdentifyFailures, HalfHourDownIsMaintenance) {
  const auto f = identify_failures({add(0), remove(100 * H), add(100 * H + 30 * kMinute)});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].down_time, 30 * kMinute);
  EXPECT_FALSE(f[0].is_failure);
}

TEST(IdentifyFailures, NoLaterAddIsUnboundedFailure) {
  const auto f = identify_failures({add(0), remove(100 * H)});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_FALSE(f[0].down_time.has_value());
  EXPECT_FALSE(f[0].next_add_ts.has_value());
  EXPECT_TRUE(f[0].is_failure);
}

TEST(IdentifyFailures, ThresholdIsInclusive) {
  EXPECT_TRUE(identify_failures({add(0), remove(10 * H), add(12 * H)})[0].is_failure);
  EXPECT_FALSE(identify_failures({add(0), remove(10 * H), add(12 * H - 1)})[0].is_failure);
}

TEST(IdentifyFailures, RemoveWithoutAddIsSkippedWithWarning) {
  testing::CaptureLog log;
  const auto f = identify_failures({remove(5 * H), add(6 * H), remove(7 * H), add(10 * H)});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].remove_ts, 7 * H);
  ASSERT_EQ(log.lines.size(), 1u);
  EXPECT_NE(log.lines[0].find("warning"), std::string::npos);
}

/// Labels every epoch in [0, n) of machine m1 under the given events.
FeatureBlock label_all(const std::vector<MachineEvent>& events, std::int32_t n) {
  std::vector<std::int32_t> epochs(static_cast<std::size_t>(n));
  for (std::int32_t k = 0; k < n; ++k) epochs[static_cast<std::size_t>(k)] = k;
  auto block = testing::single_column_block(0, epochs);
  const auto schedules = removal_schedules(identify_failures(events));
  const EpochGrid grid{E, n};
  assign_classes(block, &schedules.at("m1"), grid, 24 * H);
  return block;
}

std::set<std::int32_t> epochs_of_class(const FeatureBlock& b, PointClass c) {
  std::set<std::int32_t> out;
  for (std::size_t r = 0; r < b.rows(); ++r)
    if (b.classes[r] == static_cast<std::uint8_t>(c)) out.insert(b.epochs[r]);
  return out;
}

std::set<std::int32_t> range(std::int32_t lo, std::int32_t hi) {  // [lo, hi]
  std::set<std::int32_t> s;
  for (auto k = lo; k <= hi; ++k) s.insert(k);
  return s;
}

std::int32_t epoch_at(Micros t) { return static_cast<std::int32_t>(t / E); }

// A failure REMOVE at 100 h: rows at t with 0 < 100h - t < 24h are FAIL,
// i.e. epochs 913..1199; everything before is SAFE.
TEST(AssignClasses, HorizonBeforeFailure) {
  const auto b = label_all({add(0), remove(100 * H), add(103 * H)}, epoch_at(100 * H));
  EXPECT_EQ(epochs_of_class(b, PointClass::Fail), range(913, 1199));
  EXPECT_EQ(epochs_of_class(b, PointClass::Safe), range(0, 912));
  EXPECT_EQ(b.rows(), 1200u);

  const auto at = [&](Micros t) {
    for (std::size_t r = 0; r < b.rows(); ++r)
      if (b.epochs[r] == epoch_at(t)) return r;
    return b.rows();
  };
  const auto r23 = at(77 * H), r25 = at(75 * H);
  EXPECT_EQ(b.classes[r23], 1);
  EXPECT_EQ(b.time_to_remove_us[r23], 23 * H);
  EXPECT_EQ(b.time_to_failure_us[r23], 23 * H);
  EXPECT_EQ(b.classes[r25], 0);
  EXPECT_EQ(b.time_to_remove_us[r25], 25 * H);
  EXPECT_EQ(b.time_to_failure_us[r25], 25 * H);
}

// A 30-minute maintenance REMOVE at 50 h: rows within the 24 h before it are
// dropped, epochs 313..599.
TEST(AssignClasses, ScrubbedBeforeMaintenance) {
  const auto b = label_all({add(0), remove(50 * H), add(50 * H + 30 * kMinute)}, epoch_at(50 * H));
  EXPECT_TRUE(epochs_of_class(b, PointClass::Fail).empty());
  EXPECT_EQ(epochs_of_class(b, PointClass::Safe), range(0, 312));
  for (auto e : b.epochs) EXPECT_NE(e, epoch_at(48 * H));  // 2 h before: dropped
}

// Maintenance at 90 h then a failure at 100 h. Rows whose forward 24 h holds
// the maintenance REMOVE are dropped even when the failure is also near.
TEST(AssignClasses, AnyAmbiguousRemovalDropsTheRow) {
  const auto b =
      label_all({add(0), remove(90 * H), add(90 * H + 30 * kMinute), remove(100 * H), add(110 * H)}, epoch_at(100 * H));
  EXPECT_EQ(epochs_of_class(b, PointClass::Safe), range(0, epoch_at(66 * H)));
  EXPECT_EQ(epochs_of_class(b, PointClass::Fail), range(epoch_at(90 * H), epoch_at(100 * H) - 1));
}

TEST(AssignClasses, NoLaterRemovalIsSafeWithoutTime) {
  const auto b = label_all({add(0), remove(10 * H), add(15 * H)}, epoch_at(40 * H));
  const auto r = b.rows() - 1;
  EXPECT_EQ(b.classes[r], 0);
  EXPECT_EQ(b.time_to_remove_us[r], kNone);
  EXPECT_EQ(b.time_to_failure_us[r], kNone);
}

// Independent per-row oracle: scan every REMOVE of the machine.
TEST(AssignClasses, MatchesBruteForceOnRandomHistories) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<MachineEvent> ev{add(0)};
    Micros t = 0;
    while (true) {
      t += static_cast<Micros>(rng.exponential(30.0 * H));
      if (t > 300 * H) break;
      ev.push_back(remove(t));
      t += rng.bernoulli(0.5) ? static_cast<Micros>(rng.uniform(5, 115) * kMinute)
                              : 2 * H + static_cast<Micros>(rng.exponential(6.0 * H));
      ev.push_back(add(t));
    }
    const auto fs = identify_failures(ev);
    const std::int32_t n = epoch_at(320 * H);
    const auto b = label_all(ev, n);
    std::size_t r = 0;
    for (std::int32_t k = 0; k < n; ++k) {
      const Micros tk = k * E;
      bool drop = false, fail = false, seen = false;
      std::int64_t ttr = kNone, ttf = kNone;
      for (const auto& f : fs) {
        if (f.remove_ts <= tk) continue;
        const Micros d = f.remove_ts - tk;
        if (!seen) {
          seen = true;
          ttr = d;
          fail = f.is_failure && d < 24 * H;
        }
        if (f.is_failure && ttf == kNone) ttf = d;
        if (!f.is_failure && d < 24 * H) drop = true;
      }
      if (drop) {
        ASSERT_TRUE(r == b.rows() || b.epochs[r] != k);
        continue;
      }
      ASSERT_LT(r, b.rows());
      ASSERT_EQ(b.epochs[r], k);
      EXPECT_EQ(b.classes[r], fail ? 1 : 0);
      EXPECT_EQ(b.time_to_remove_us[r], ttr);
      EXPECT_EQ(b.time_to_failure_us[r], ttf);
      if (b.classes[r]) {
        EXPECT_GE(b.time_to_remove_us[r], 0);
        EXPECT_LT(b.time_to_remove_us[r], 24 * H);
      } else {
        EXPECT_TRUE(b.time_to_remove_us[r] == kNone || b.time_to_remove_us[r] >= 24 * H);
      }
      ++r;
    }
    EXPECT_EQ(r, b.rows());
  }
}

FeatureBlock labeled_safe_block(std::uint32_t machine, std::int32_t n, std::int32_t n_fail = 0) {
  std::vector<std::int32_t> epochs;
  for (std::int32_t k = 0; k < n; ++k) epochs.push_back(k);
  auto b = testing::single_column_block(machine, epochs);
  b.classes.assign(static_cast<std::size_t>(n), 0);
  for (std::int32_t k = 0; k < n_fail; ++k) b.classes[static_cast<std::size_t>(k)] = 1;
  b.time_to_remove_us.assign(static_cast<std::size_t>(n), kNone);
  b.time_to_failure_us.assign(static_cast<std::size_t>(n), kNone);
  return b;
}

TEST(Subsample, RateOneIsIdentity) {
  auto b = labeled_safe_block(0, 500, 20);
  const auto before = b.epochs;
  subsample_safe(b, "m1", 1.0, 42);
  EXPECT_EQ(b.epochs, before);
}

// The count is a property of the seeded generator and was recorded from it;
// it must stay inside the binomial bulk around 50 as well.
TEST(Subsample, TenThousandSafeAtHalfPercent) {
  auto b = labeled_safe_block(0, 10000);
  subsample_safe(b, "m0001", 0.005, 1);
  EXPECT_EQ(b.rows(), 69u);
  EXPECT_GT(b.rows(), 22u);
  EXPECT_LT(b.rows(), 78u);
  auto again = labeled_safe_block(0, 10000);
  subsample_safe(again, "m0001", 0.005, 1);
  EXPECT_EQ(again.epochs, b.epochs);
  auto other = labeled_safe_block(0, 10000);
  subsample_safe(other, "m0001", 0.005, 2);
  EXPECT_NE(other.epochs, b.epochs);
}

TEST(Subsample, KeepsEveryFailRow) {
  auto b = labeled_safe_block(0, 2000, 300);
  subsample_safe(b, "m1", 0.01, 9);
  std::size_t fail = 0;
  for (auto c : b.classes) fail += c;
  EXPECT_EQ(fail, 300u);
  EXPECT_EQ(b.values.size(), b.rows());
  EXPECT_EQ(b.time_to_remove_us.size(), b.rows());
}

TEST(Subsample, DecisionIgnoresRowOrder) {
  auto b = labeled_safe_block(0, 3000);
  subsample_safe(b, "m7", 0.05, 3);
  std::set<std::int32_t> kept(b.epochs.begin(), b.epochs.end());
  for (std::int32_t k = 2999; k >= 0; --k) EXPECT_EQ(kept.contains(k), keep_safe_point(3, "m7", k, 0.05));
}

TEST(Subsample, RateOutsideUnitIntervalIsFatal) {
  auto b = labeled_safe_block(0, 10);
  for (double bad : {0.0, -0.1, 1.5, std::nan("")}) EXPECT_THROW(subsample_safe(b, "m1", bad, 1), InputError);
}

TEST(LabelMatrix, LabelsEachMachineByItsOwnSchedule) {
  FeatureMatrix m;
  m.meta.machines = {"a", "b"};
  m.meta.n_epochs = epoch_at(30 * H);
  m.meta.columns = {"x"};
  m.meta.coverage_columns = {"c"};
  std::vector<std::int32_t> epochs;
  for (std::int32_t k = 0; k < m.meta.n_epochs; ++k) epochs.push_back(k);
  m.blocks = {testing::single_column_block(0, epochs), testing::single_column_block(1, epochs)};
  const auto fs = identify_failures({add(0, "a"), add(0, "b"), remove(20 * H, "a")});
  label_matrix(m, fs);
  std::size_t fail_a = 0, fail_b = 0;
  for (auto c : m.blocks[0].classes) fail_a += c;
  for (auto c : m.blocks[1].classes) fail_b += c;
  EXPECT_EQ(fail_a, 240u);  // epochs 0 .. 239, all within 24 h of the 20 h failure
  EXPECT_EQ(fail_b, 0u);
}

}  // namespace
}  // namespace nodefail
