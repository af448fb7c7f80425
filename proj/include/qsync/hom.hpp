#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qsync/biphoton.hpp"
#include "qsync/error.hpp"

namespace qsync {

/// Coincidence probability versus relative delay. `baseline` is the
/// no-interference level (½); multiply by 2·pair_rate for coincidences/s.
struct HomProfile {
  std::vector<double> delays;       // s
  std::vector<double> probability;  // coincidence probability per pair
  double baseline = 0.5;
};

/// Evenly spaced delays, `points` samples over [center − half_range, center + half_range].
inline std::vector<double> delay_grid(double half_range = 10e-12, std::size_t points = 201, double center = 0.0) {
  std::vector<double> d(points);
  for (std::size_t k = 0; k < points; ++k)
    d[k] = center - half_range + 2.0 * half_range * static_cast<double>(k) / static_cast<double>(points - 1);
  return d;
}

/// Exchange-overlap kernel W(u) = Σ_v f(v,u)·conj(f(v,−u))·cell.
inline std::vector<cdouble> exchange_overlap(const JointSpectralAmplitude& f) {
  std::vector<cdouble> w(f.nu(), 0.0);
  const std::size_t nu = f.nu();
  for (std::size_t iv = 0; iv < f.nv(); ++iv)
    for (std::size_t iu = 0; iu < nu; ++iu) w[iu] += f.at(iv, iu) * std::conj(f.at(iv, nu - 1 - iu));
  for (auto& x : w) x *= f.cell();
  return w;
}

/// P(δ) = ½[1 − d·Re ∬ f(Ω_s,Ω_i)·conj(f(Ω_i,Ω_s))·e^{−i(Ω_s−Ω_i)δ} dΩ_s dΩ_i].
inline HomProfile hom_profile(const JointSpectralAmplitude& jsa, const std::vector<double>& delays,
                              double distinguishability) {
  if (std::abs(jsa.norm() - 1.0) > 1e-6) fail(ErrorCategory::precondition, "JSA is not normalized");
  if (!(distinguishability >= 0.0 && distinguishability <= 1.0))
    fail(ErrorCategory::precondition, "distinguishability must lie in [0, 1]");
  auto w = exchange_overlap(jsa);
  HomProfile p;
  p.delays = delays;
  p.probability.reserve(delays.size());
  for (double d : delays) {
    double re = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      double ph = -jsa.u[j] * d;
      re += w[j].real() * std::cos(ph) - w[j].imag() * std::sin(ph);
    }
    p.probability.push_back(0.5 * (1.0 - distinguishability * re));
  }
  return p;
}

/// Analytic Gaussian dip, used for synthetic checks and by the lock loop.
inline HomProfile gaussian_dip(const std::vector<double>& delays, double visibility, double fwhm, double center = 0.0) {
  HomProfile p;
  p.delays = delays;
  double s = fwhm / kFwhmPerSigma;
  for (double d : delays) {
    double x = (d - center) / s;
    p.probability.push_back(0.5 * (1.0 - visibility * std::exp(-0.5 * x * x)));
  }
  return p;
}

struct DipMetrics {
  double visibility = 0.0;
  double width_fwhm = 0.0;
  double minimum_delay = 0.0;
  double minimum = 0.0;
};

inline DipMetrics dip_metrics(const HomProfile& p) {
  const auto& y = p.probability;
  const auto& x = p.delays;
  if (y.size() < 3 || y.size() != x.size()) fail(ErrorCategory::precondition, "profile needs at least 3 samples");
  std::size_t k = 0;
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] < y[k]) k = i;
  DipMetrics m;
  m.minimum = y[k];
  m.visibility = (p.baseline - y[k]) / p.baseline;
  if (!(m.visibility > 1e-9)) fail(ErrorCategory::fit, "no dip in profile: visibility is zero and width is undefined");
  if (k == 0 || k + 1 == y.size()) fail(ErrorCategory::fit, "dip not captured: minimum lies on the delay-range boundary");

  // Vertex of the parabola through the three samples around the minimum.
  double x0 = x[k - 1], x1 = x[k], x2 = x[k + 1];
  double y0 = y[k - 1], y1 = y[k], y2 = y[k + 1];
  double den = (x0 - x1) * (x0 - x2) * (x1 - x2);
  double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
  double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
  m.minimum_delay = a > 0 ? -b / (2.0 * a) : x1;

  double half = 0.5 * (p.baseline + y[k]);
  std::size_t l = k;
  while (l > 0 && y[l] < half) --l;
  std::size_t r = k;
  while (r + 1 < y.size() && y[r] < half) ++r;
  if (y[l] < half || y[r] < half) fail(ErrorCategory::fit, "dip not captured: half-depth level not reached inside the range");
  double xl = x[l] + (half - y[l]) * (x[l + 1] - x[l]) / (y[l + 1] - y[l]);
  double xr = x[r - 1] + (half - y[r - 1]) * (x[r] - x[r - 1]) / (y[r] - y[r - 1]);
  m.width_fwhm = xr - xl;
  return m;
}

/// Poisson coincidence counts with mean pair_rate·2P(δ)·dwell per delay point.
inline std::vector<std::uint64_t> sample_dip_counts(const HomProfile& p, double pair_rate, double dwell,
                                                    std::uint64_t seed) {
  if (!(dwell >= 0.0) || !(pair_rate >= 0.0)) fail(ErrorCategory::precondition, "dwell and pair rate must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> counts;
  counts.reserve(p.probability.size());
  for (double prob : p.probability) {
    double mean = pair_rate * 2.0 * prob * dwell;
    if (mean <= 0.0) {
      counts.push_back(0);
      continue;
    }
    std::poisson_distribution<std::uint64_t> pois(mean);
    counts.push_back(pois(rng));
  }
  return counts;
}

}  // namespace qsync
