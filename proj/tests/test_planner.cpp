#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qsync/planner.hpp"

using namespace qsync;

namespace {
// Drift of a single 10 km fiber with the paper's B and ΔT: 5.03e-14·1e4·0.006.
constexpr double kSingle = 5.03e-14 * 1e4 * 0.006;
}  // namespace

TEST(EvaluatePlan, PaperSplit) {
  PlanConstraints c;
  auto e = evaluate_plan({5000, 4000, 1000}, c);
  EXPECT_NEAR(e.drift, 5.03e-14 * std::sqrt(42e6) * 0.006, 1e-20);
  EXPECT_NEAR(e.drift, 1.96e-12, 0.005e-12);
  EXPECT_NEAR(e.loss, 2.0 + 2 * c.connector_loss, 1e-12);
}

TEST(EvaluatePlan, SingleAndEqualHalves) {
  PlanConstraints c;
  EXPECT_NEAR(evaluate_plan({10000}, c).drift, kSingle, 1e-20);
  EXPECT_NEAR(kSingle, 3.02e-12, 0.005e-12);
  EXPECT_NEAR(evaluate_plan({5000, 5000}, c).drift, kSingle / std::sqrt(2.0), 1e-20);
}

TEST(EvaluatePlan, LengthMismatch) {
  PlanConstraints c;
  try {
    evaluate_plan({5000, 4000}, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::validation);
  }
  EXPECT_NO_THROW(evaluate_plan({5000.5, 4999.8}, c));
}

TEST(PlanSegments, SafetyFactorOne) {
  PlanConstraints c;
  c.safety_factor = 1.0;
  auto p = plan_segments(c);
  ASSERT_TRUE(p.feasible);
  EXPECT_EQ(p.lengths.size(), 1u);  // 3.02 ps < 3.25 ps
}

TEST(PlanSegments, DefaultSafetyFactor) {
  // Limit 3.25/1.5 = 2.167 ps; m = 2 gives 3.018/√2 = 2.134 ps.
  PlanConstraints c;
  auto p = plan_segments(c);
  ASSERT_TRUE(p.feasible);
  EXPECT_EQ(p.lengths.size(), 2u);
  EXPECT_NEAR(p.drift, kSingle / std::sqrt(2.0), 1e-20);
  EXPECT_FALSE(p.table[0].drift_ok);
  EXPECT_TRUE(p.table[1].drift_ok);
}

TEST(PlanSegments, InfeasibleLossBudget) {
  PlanConstraints c;
  c.loss_budget = 1.5;  // bare fiber alone is 2 dB
  auto p = plan_segments(c);
  EXPECT_FALSE(p.feasible);
  for (const auto& row : p.table) EXPECT_FALSE(row.feasible());
}

TEST(PlanSegments, SingleSegmentAllowed) {
  PlanConstraints c;
  c.max_segments = 1;
  auto p = plan_segments(c);
  EXPECT_EQ(p.lengths, std::vector<double>{10000.0});
  EXPECT_NEAR(p.drift, kSingle, 1e-20);
  EXPECT_EQ(p.table.size(), 1u);
}

TEST(PlanSegments, MonotoneTable) {
  PlanConstraints c;
  auto p = plan_segments(c);
  for (std::size_t k = 1; k < p.table.size(); ++k) {
    EXPECT_LE(p.table[k].drift, p.table[k - 1].drift);
    EXPECT_GE(p.table[k].loss, p.table[k - 1].loss);
  }
}

TEST(PlanSegments, EqualSplitBeatsRandomSplits) {
  PlanConstraints c;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int m = 2; m <= 5; ++m) {
    double equal = evaluate_plan(std::vector<double>(std::size_t(m), c.total_length / m), c).drift;
    for (int trial = 0; trial < 10000 / 4; ++trial) {
      std::vector<double> w(static_cast<std::size_t>(m));
      double s = 0.0;
      for (auto& x : w) s += (x = u(rng) + 1e-9);
      for (auto& x : w) x *= c.total_length / s;
      ASSERT_GE(evaluate_plan(w, c).drift, equal * (1 - 1e-12));
    }
  }
}

TEST(PlanConstraints, Validation) {
  PlanConstraints c;
  c.max_segments = 0;
  EXPECT_THROW(plan_segments(c), Error);
  c = PlanConstraints{};
  c.B = -1;
  EXPECT_THROW(plan_segments(c), Error);
}
