#pragma once

// Choosing how many spools to split a link into: drift falls as √(Σ l_k²),
// loss rises by one connector per extra spool.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "qsync/fiber_model.hpp"

namespace qsync {

struct PlanConstraints {
  double total_length = 10'000.0;   // m
  int max_segments = 10;
  double connector_loss = 0.3;      // dB per joint
  double attenuation = 0.2;         // dB/km
  double loss_budget = 6.0;         // dB
  double coherence_time = 3.25e-12; // s
  double B = 5.03e-14;              // s/(m·°C)
  double delta_t = 0.006;           // °C
  double safety_factor = 1.5;

  void validate() const {
    std::vector<std::string> bad;
    auto positive = [&](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) bad.push_back(std::string(name) + " must be > 0");
    };
    positive(total_length, "total_length");
    positive(attenuation, "attenuation");
    positive(loss_budget, "loss_budget");
    positive(coherence_time, "coherence_time");
    positive(B, "B");
    positive(delta_t, "delta_t");
    positive(safety_factor, "safety_factor");
    if (!(connector_loss >= 0.0)) bad.push_back("connector_loss must be >= 0");
    if (max_segments < 1) bad.push_back("max_segments must be >= 1");
    if (!bad.empty()) {
      std::string msg = "invalid plan constraints: " + bad.front();
      for (std::size_t i = 1; i < bad.size(); ++i) msg += "; " + bad[i];
      fail(ErrorCategory::validation, msg);
    }
  }
};

struct PlanEvaluation {
  double drift = 0.0;  // s
  double loss = 0.0;   // dB
};

inline PlanEvaluation evaluate_plan(const std::vector<double>& lengths_m, const PlanConstraints& c) {
  c.validate();
  if (lengths_m.empty()) fail(ErrorCategory::validation, "plan has no segments");
  double sum = 0.0;
  for (double l : lengths_m) sum += l;
  if (std::abs(sum - c.total_length) > 1.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "segment lengths sum to %.3f m, expected %.3f m", sum, c.total_length);
    fail(ErrorCategory::validation, buf);
  }
  PlanEvaluation e;
  e.drift = drift_segmented(c.B, lengths_m, c.delta_t);
  e.loss = c.attenuation * sum * 1e-3 + c.connector_loss * double(lengths_m.size() - 1);
  return e;
}

struct PlanRow {
  int segments = 0;
  double drift = 0.0;
  double loss = 0.0;
  bool drift_ok = false;
  bool loss_ok = false;
  bool feasible() const { return drift_ok && loss_ok; }
};

struct SegmentPlan {
  std::vector<double> lengths;  // recommended equal split (largest m tried if infeasible)
  double drift = 0.0;
  double loss = 0.0;
  bool feasible = false;
  std::vector<PlanRow> table;   // every m from 1 to max_segments
};

/// Smallest m whose equal split meets drift ≤ coherence_time / safety_factor within the loss budget.
/// For a fixed m the equal split minimizes √(Σ l_k²), so only equal splits are searched.
inline SegmentPlan plan_segments(const PlanConstraints& c) {
  c.validate();
  SegmentPlan plan;
  const double limit = c.coherence_time / c.safety_factor;
  int chosen = 0;
  for (int m = 1; m <= c.max_segments; ++m) {
    std::vector<double> split(std::size_t(m), c.total_length / m);
    auto e = evaluate_plan(split, c);
    PlanRow row{m, e.drift, e.loss, e.drift <= limit, e.loss <= c.loss_budget};
    plan.table.push_back(row);
    if (!chosen && row.feasible()) chosen = m;
  }
  int m = chosen ? chosen : c.max_segments;
  plan.lengths.assign(std::size_t(m), c.total_length / m);
  plan.drift = plan.table[std::size_t(m - 1)].drift;
  plan.loss = plan.table[std::size_t(m - 1)].loss;
  plan.feasible = chosen != 0;
  return plan;
}

}  // namespace qsync
