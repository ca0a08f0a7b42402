#include <gtest/gtest.h>

#include <random>
#include <set>

#include "support.hpp"

namespace nodefail {
namespace {

constexpr Micros kEpoch = 300 * kSecond;

// One row per (machine, epoch) with a single feature; every 40th row FAIL.
BaseDataset grid_base(int machines, double days, int fail_every = 40) {
  BaseDataset b;
  b.meta.epoch_length = kEpoch;
  b.meta.n_epochs = static_cast<std::int64_t>(days * kDay / kEpoch);
  b.meta.trace_end = b.meta.n_epochs * kEpoch;
  b.meta.columns = {"x"};
  for (int m = 0; m < machines; ++m) b.meta.machines.push_back("m" + std::to_string(m));
  const std::size_t n = static_cast<std::size_t>(machines * b.meta.n_epochs);
  b.data = Dataset(n, 1);
  std::size_t r = 0;
  for (int m = 0; m < machines; ++m)
    for (std::int32_t e = 0; e < b.meta.n_epochs; ++e, ++r) {
      b.machine.push_back(static_cast<std::uint32_t>(m));
      b.epoch.push_back(e);
      b.data.at(r, 0) = static_cast<float>(e % 17);
      b.data.labels[r] = (r % static_cast<std::size_t>(fail_every)) == 0;
      b.data.keys[r] = point_key(static_cast<std::uint32_t>(m), e);
      b.time_to_remove_us.push_back(b.data.labels[r] ? kHour : -1);
      b.time_to_failure_us.push_back(b.data.labels[r] ? kHour : -1);
    }
  return b;
}

TEST(Windows, FourteenDaysFitExactlyOne) {
  BenchmarkParams p;
  EXPECT_EQ(p.footprint(), 14 * kDay);
  EXPECT_EQ(max_benchmarks(14 * kDay, p), 1);
  p.count = 1;
  const auto w = make_windows(14 * kDay, p);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].train_start, 2 * kDay);
  EXPECT_EQ(w[0].train_end, 12 * kDay);
  EXPECT_EQ(w[0].test_start, 13 * kDay);
  EXPECT_EQ(w[0].test_end, 14 * kDay);
}

TEST(Windows, TwentyNineDaysFitSixteenAndDefaultRunsFifteen) {
  BenchmarkParams p;
  EXPECT_EQ(max_benchmarks(29 * kDay, p), 16);
  const auto w = make_windows(29 * kDay, p);
  ASSERT_EQ(w.size(), 15u);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].index, static_cast<int>(i) + 1);
    EXPECT_EQ(w[i].train_start, static_cast<Micros>(2 + i) * kDay);
    EXPECT_EQ(w[i].test_start - w[i].train_end, kDay);
  }
  p.daily = true;
  EXPECT_EQ(make_windows(29 * kDay, p).size(), 16u);
}

TEST(Windows, InsufficientSpanReportsFitCount) {
  BenchmarkParams p;
  try {
    make_windows(20 * kDay, p);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("fits 7 benchmark"), std::string::npos) << e.what();
  }
  EXPECT_THROW(make_windows(13 * kDay, p), InputError);
  p.daily = true;
  EXPECT_THROW(make_windows(13 * kDay, p), InputError);
}

TEST(Windows, GapBelowOneDayRejected) {
  BenchmarkParams p;
  p.gap = 23 * kHour;
  EXPECT_THROW(p.check(), InputError);
}

Dataset labeled_rows(std::size_t fail, std::size_t safe) {
  Dataset d(fail + safe, 1);
  for (std::size_t r = 0; r < d.n_rows; ++r) {
    d.labels[r] = r < fail;
    d.keys[r] = point_key(0, static_cast<std::int32_t>(r));
  }
  return d;
}

std::vector<std::uint32_t> all_rows(const Dataset& d) {
  std::vector<std::uint32_t> r(d.n_rows);
  std::iota(r.begin(), r.end(), 0u);
  return r;
}

TEST(TestSplit, HalvesPerClass) {
  {
    const auto d = labeled_rows(10, 4100);
    const auto h = split_test_day(d, all_rows(d), 3);
    EXPECT_EQ(h.individual.size(), 2055u);
    EXPECT_EQ(h.ensemble.size(), 2055u);
    EXPECT_EQ(count_fail(d, h.individual), 5u);
    EXPECT_EQ(count_fail(d, h.ensemble), 5u);
  }
  {
    const auto d = labeled_rows(19, 19200);
    const auto h = split_test_day(d, all_rows(d), 3);
    EXPECT_EQ(h.individual.size(), 9609u);
    EXPECT_EQ(h.ensemble.size(), 9610u);
    EXPECT_EQ(count_fail(d, h.individual), 9u);
    EXPECT_EQ(count_fail(d, h.ensemble), 10u);
  }
}

TEST(TestSplit, DeterministicAndOrderIndependent) {
  const auto d = labeled_rows(30, 500);
  auto rows = all_rows(d);
  const auto a = split_test_day(d, rows, 9);
  std::reverse(rows.begin(), rows.end());
  const auto b = split_test_day(d, rows, 9);
  EXPECT_EQ(a.individual, b.individual);
  EXPECT_EQ(a.ensemble, b.ensemble);
  EXPECT_NE(a.individual, split_test_day(d, rows, 10).individual);
}

TEST(TestSplit, EmptyClassWarns) {
  const auto d = labeled_rows(0, 20);
  testing::CaptureLog log;
  const auto h = split_test_day(d, all_rows(d), 1);
  EXPECT_EQ(h.individual.size() + h.ensemble.size(), 20u);
  ASSERT_EQ(log.lines.size(), 1u);
  EXPECT_NE(log.lines[0].find("no FAIL"), std::string::npos);
}

TEST(Benchmarks, SplitsAreDisjointAndSeparatedByTheGap) {
  const auto base = grid_base(3, 16);
  BenchmarkParams p;
  p.count = 3;
  const auto splits = make_benchmarks(base, p, 42);
  ASSERT_EQ(splits.size(), 3u);
  for (const auto& s : splits) {
    std::set<std::uint32_t> train(s.train_pos.begin(), s.train_pos.end());
    train.insert(s.train_neg.begin(), s.train_neg.end());
    std::set<std::uint32_t> ind(s.individual_test.begin(), s.individual_test.end());
    std::set<std::uint32_t> ens(s.ensemble_test.begin(), s.ensemble_test.end());
    EXPECT_EQ(train.size(), s.train_pos.size() + s.train_neg.size());
    Micros last_train = 0, first_test = std::numeric_limits<Micros>::max();
    for (auto r : train) {
      EXPECT_EQ(ind.count(r) + ens.count(r), 0u);
      last_train = std::max(last_train, base.time_of(r));
      EXPECT_GE(base.time_of(r), s.window.train_start);
      EXPECT_LT(base.time_of(r), s.window.train_end);
    }
    for (auto r : ind) EXPECT_EQ(ens.count(r), 0u);
    for (const auto* half : {&ind, &ens})
      for (auto r : *half) {
        first_test = std::min(first_test, base.time_of(r));
        EXPECT_LT(base.time_of(r), s.window.test_end);
      }
    EXPECT_GE(first_test - last_train, 24 * kHour);
    for (auto r : s.train_pos) EXPECT_EQ(base.data.labels[r], 1);
    for (auto r : s.train_neg) EXPECT_EQ(base.data.labels[r], 0);

    // The halves together are exactly the test day.
    std::size_t test_rows = 0;
    for (std::size_t r = 0; r < base.rows(); ++r)
      test_rows += base.time_of(r) >= s.window.test_start && base.time_of(r) < s.window.test_end;
    EXPECT_EQ(ind.size() + ens.size(), test_rows);
    EXPECT_EQ(test_rows, 3u * 288u);
    EXPECT_EQ(train.size(), 3u * 2880u);
  }
}

TEST(Benchmarks, SeedsFollowTheDerivationAndRepeat) {
  const auto base = grid_base(2, 15);
  BenchmarkParams p;
  p.count = 2;
  const auto a = make_benchmarks(base, p, 5);
  const auto b = make_benchmarks(base, p, 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto s = BenchmarkSeeds::for_index(5, a[i].window.index);
    EXPECT_EQ(a[i].seeds.benchmark, derive_seed(5, 1000 + a[i].window.index));
    EXPECT_EQ(a[i].seeds.split, derive_seed(s.benchmark, 1));
    EXPECT_EQ(a[i].seeds.ensemble, derive_seed(s.benchmark, 2));
    EXPECT_EQ(a[i].individual_test, b[i].individual_test);
    EXPECT_EQ(a[i].train_neg, b[i].train_neg);
  }
  EXPECT_NE(a[0].seeds.split, a[1].seeds.split);
}

TEST(Benchmarks, SplitJsonCountsMatch) {
  const auto base = grid_base(2, 14);
  BenchmarkParams p;
  p.count = 1;
  const auto s = make_benchmarks(base, p, 1).at(0);
  const auto j = split_json(s, base.data);
  EXPECT_EQ(j["index"], 1);
  EXPECT_EQ(j["train"]["fail"].get<std::size_t>(), s.train_pos.size());
  EXPECT_EQ(j["individual_test"]["fail"].get<std::size_t>() + j["individual_test"]["safe"].get<std::size_t>(),
            s.individual_test.size());
  EXPECT_EQ(j["test_days"][0].get<double>(), 13.0);
  EXPECT_EQ(bench_dir_name(3), "bench_3");
}

TEST(Benchmarks, RunProducesReportOnEnsembleHalf) {
  testing::MuteLog mute;
  const auto base = grid_base(2, 14, 5);
  BenchmarkParams p;
  p.count = 1;
  const auto s = make_benchmarks(base, p, 1).at(0);
  EnsembleConfig c;
  c.fsafe = {1};
  c.tree_counts = {2, 3};
  c.repetitions = 1;
  const auto r = run_benchmark(base, s, c, EvalParams{});
  EXPECT_EQ(r.pool.size(), 2u);
  EXPECT_EQ(r.scored.size(), s.ensemble_test.size());
  EXPECT_EQ(r.report.points, s.ensemble_test.size());
  for (const auto& rec : r.pool) EXPECT_GE(rec.precision, 0);
  const auto stats = pool_stats(r.pool);
  EXPECT_EQ(stats["classifiers"], 2);

  // Pool seeds come from the split, not from the config.
  EXPECT_EQ(r.pool[0].seed, derive_seed(s.seeds.ensemble, 1));
}

}  // namespace
}  // namespace nodefail
