#include <gtest/gtest.h>

#include "support.hpp"

namespace nodefail {
namespace {

SynthConfig small_config(std::uint64_t seed = 5) {
  SynthConfig c;
  c.n_machines = 12;
  c.duration_days = 14;
  c.failure_rate = 1.0;
  c.seed = seed;
  return c;
}

std::string serialized(const TraceTables& t) {
  return serialize_task_events(t.task_events) + serialize_task_usage(t.task_usage) +
         serialize_machine_events(t.machine_events);
}

TEST(Synth, SameSeedSameBytes) {
  const auto a = generate_trace(small_config());
  const auto b = generate_trace(small_config());
  EXPECT_EQ(serialized(a), serialized(b));
}

TEST(Synth, ParallelGenerationMatchesSequential) {
  const auto a = generate_trace(small_config(), 1);
  const auto b = generate_trace(small_config(), 4);
  EXPECT_EQ(serialized(a), serialized(b));
}

TEST(Synth, DifferentSeedDifferentTrace) {
  EXPECT_NE(serialized(generate_trace(small_config(5))), serialized(generate_trace(small_config(6))));
}

TEST(Synth, OutputValidates) {
  const auto t = generate_trace(small_config());
  const auto r = validate_trace(t);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.intervals_overlapping_down, 0u);
  EXPECT_EQ(r.machine_sequence_violations, 0u);
  EXPECT_GT(r.closed_intervals, 1000u);
}

TEST(Synth, EveryRemoveFollowedByOneAddOrTraceEnd) {
  const auto t = generate_trace(small_config());
  for (const auto& [id, h] : machine_histories(t.machine_events)) {
    EXPECT_EQ(h.violations, 0u) << id;
    for (std::size_t i = 0; i + 1 < h.down.size(); ++i) EXPECT_TRUE(h.down[i].add.has_value()) << id;
  }
}

TEST(Synth, TooShortForBenchmarksIsFatal) {
  auto c = small_config();
  c.duration_days = 10;
  EXPECT_THROW(generate_trace(c), InputError);
  c.require_benchmark_span = false;
  EXPECT_NO_THROW(generate_trace(c));
}

TEST(Synth, ConfigJsonRejectsUnknownKeys) {
  nlohmann::json j{{"n_machines", 3}, {"bogus", 1}};
  EXPECT_THROW(j.get<SynthConfig>(), InputError);
  nlohmann::json ok;
  to_json(ok, small_config());
  EXPECT_EQ(ok.get<SynthConfig>().n_machines, 12);
}

// Down times counted straight from the generated machine-event file: the
// failure rate of 6 per month over 200 machines yields both sides of the
// 2 h threshold.
TEST(Synth, DownTimesCoverBothSidesOfThreshold) {
  SynthConfig c;
  c.n_machines = 200;
  c.duration_days = 29;
  c.failure_rate = 6;
  c.task_arrival_rate = 0.5;
  const auto t = generate_trace(c);
  std::size_t long_down = 0, short_down = 0;
  for (const auto& [id, h] : machine_histories(t.machine_events))
    for (const auto& d : h.down) {
      if (!d.add || *d.add - d.remove >= 2 * kHour)
        ++long_down;
      else
        ++short_down;
    }
  EXPECT_GT(long_down, 500u);
  EXPECT_GT(short_down, 100u);
}

// Share of task terminations that are FAIL inside the precursor windows,
// relative to the share elsewhere.
double precursor_fail_ratio(double strength) {
  SynthConfig c = small_config(11);
  c.n_machines = 30;
  c.failure_rate = 2;
  c.precursor_strength = strength;
  const auto t = generate_trace(c);
  std::map<std::string, std::vector<Micros>> failures;
  for (const auto& [id, h] : machine_histories(t.machine_events))
    for (const auto& d : h.down)
      if (!d.add || *d.add - d.remove >= 2 * kHour) failures[id].push_back(d.remove);
  const Micros window = static_cast<Micros>(c.precursor_hours * kHour);
  double in_fail = 0, in_all = 0, out_fail = 0, out_all = 0;
  for (const auto& e : t.task_events) {
    if (!is_terminal(e.type)) continue;
    bool inside = false;
    for (Micros r : failures[e.machine_id]) inside = inside || (e.timestamp < r && r - e.timestamp <= window);
    const bool fail = e.type == TaskEventType::Fail;
    (inside ? in_fail : out_fail) += fail;
    (inside ? in_all : out_all) += 1;
  }
  return (in_fail / in_all) / (out_fail / out_all);
}

TEST(Synth, PrecursorRaisesFailedTerminations) { EXPECT_GT(precursor_fail_ratio(3.0), 2.0); }

TEST(Synth, NullTraceHasNoPrecursor) {
  const double r = precursor_fail_ratio(0.0);
  EXPECT_GT(r, 0.75);
  EXPECT_LT(r, 1.25);
}

}  // namespace
}  // namespace nodefail
