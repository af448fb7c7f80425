#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "qsync/error.hpp"
#include "qsync/fiber_model.hpp"
#include "qsync/source.hpp"

namespace qsync {

using cdouble = std::complex<double>;

/// Discretized two-photon spectral amplitude.
///
/// Stored on sum/difference detuning axes v = Ω_s + Ω_i and u = Ω_s − Ω_i,
/// both relative to `reference_omega` (the mean of the two centre
/// frequencies). Both axes are uniform and symmetric about zero, so photon
/// exchange is the index flip u → −u. dΩ_s dΩ_i = ½ du dv.
struct JointSpectralAmplitude {
  std::vector<double> v;
  std::vector<double> u;
  std::vector<cdouble> amplitude;  // row-major, amplitude[iv * u.size() + iu]
  double reference_omega = 0.0;
  /// Upper bound on the phase change between neighbouring u samples
  /// accumulated by apply_dispersion (radians).
  double max_phase_step_u = 0.0;

  std::size_t nv() const { return v.size(); }
  std::size_t nu() const { return u.size(); }
  double dv() const { return v.size() > 1 ? v[1] - v[0] : 0.0; }
  double du() const { return u.size() > 1 ? u[1] - u[0] : 0.0; }
  /// Area of one grid cell in (Ω_s, Ω_i).
  double cell() const { return 0.5 * dv() * du(); }
  cdouble& at(std::size_t iv, std::size_t iu) { return amplitude[iv * nu() + iu]; }
  const cdouble& at(std::size_t iv, std::size_t iu) const { return amplitude[iv * nu() + iu]; }

  double norm() const {
    double s = 0.0;
    for (const auto& a : amplitude) s += std::norm(a);
    return s * cell();
  }
};

/// Grid resolution and extent, in units of each axis' marginal standard deviation.
struct JsaGrid {
  std::size_t n_sum = 512;
  std::size_t n_difference = 512;
  double sum_span_sigmas = 6.0;
  double difference_span_sigmas = 6.0;
};

inline std::vector<double> symmetric_axis(std::size_t n, double half_span) {
  std::vector<double> x(n);
  double step = 2.0 * half_span / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) x[i] = (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1)) * step;
  return x;
}

inline JointSpectralAmplitude gaussian_jsa(const PhotonPairSource& source, const JsaGrid& grid) {
  source.validate();
  if (grid.n_sum < 64 || grid.n_difference < 64)
    fail(ErrorCategory::config, "JSA grid needs at least 64 points per axis");
  if (grid.sum_span_sigmas < 6.0 || grid.difference_span_sigmas < 6.0)
    fail(ErrorCategory::config, "JSA grid must span at least 6 standard deviations of each marginal");

  const double sp = source.sum_bandwidth, sm = source.difference_bandwidth, kappa = source.spectral_tilt;
  const double u0 = source.center_difference();
  JointSpectralAmplitude f;
  f.reference_omega = source.mean_omega();
  f.v = symmetric_axis(grid.n_sum, grid.sum_span_sigmas * sp);
  f.u = symmetric_axis(grid.n_difference,
                       grid.difference_span_sigmas * source.difference_marginal_sigma() + std::abs(u0));
  f.amplitude.resize(f.nv() * f.nu());
  for (std::size_t iv = 0; iv < f.nv(); ++iv) {
    double v = f.v[iv];
    double gv = std::exp(-v * v / (4.0 * sp * sp));
    for (std::size_t iu = 0; iu < f.nu(); ++iu) {
      double d = f.u[iu] - u0 - kappa * v;
      f.at(iv, iu) = gv * std::exp(-d * d / (4.0 * sm * sm));
    }
  }
  double scale = 1.0 / std::sqrt(f.norm());
  for (auto& a : f.amplitude) a *= scale;
  return f;
}

inline JointSpectralAmplitude gaussian_jsa(const PhotonPairSource& source, std::size_t grid_size = 512) {
  JsaGrid g;
  g.n_sum = g.n_difference = grid_size;
  return gaussian_jsa(source, g);
}

/// φ(Ω) = linear·Ω + quadratic·Ω² for a detuning Ω (rad/s) from the expansion point.
struct QuadraticPhase {
  double linear = 0.0;     // s
  double quadratic = 0.0;  // s²
  double operator()(double omega) const { return (linear + quadratic * omega) * omega; }
  double slope(double omega) const { return linear + 2.0 * quadratic * omega; }
  QuadraticPhase operator-() const { return {-linear, -quadratic}; }
};

/// Spectral phase of a link expanded about the optical frequency of λ₀:
/// Σ_k k′_k·l_k·Ω + ½·k″_k·l_k·Ω², each segment at T + its offset.
inline QuadraticPhase fiber_phase(const FiberLink& link, double lambda0_nm, double temperature_c) {
  QuadraticPhase p;
  for (const auto& s : link.segments()) {
    double T = temperature_c + s.temperature_offset_c;
    p.linear += group_delay_coefficient(link.dispersion(), lambda0_nm, T) * s.length_m;
    p.quadratic += 0.5 * gvd_coefficient(link.dispersion(), lambda0_nm, T) * s.length_m;
  }
  return p;
}

using PhaseFunction = std::function<double(double)>;

/// f′ = f·exp(i[φ_s(Ω_s) + φ_i(Ω_i)]).
inline JointSpectralAmplitude apply_dispersion(const JointSpectralAmplitude& jsa, const PhaseFunction& phase_signal,
                                               const PhaseFunction& phase_idler) {
  JointSpectralAmplitude out = jsa;
  double max_step = 0.0;
  std::vector<double> row(jsa.nu());
  for (std::size_t iv = 0; iv < jsa.nv(); ++iv) {
    for (std::size_t iu = 0; iu < jsa.nu(); ++iu) {
      double ws = 0.5 * (jsa.v[iv] + jsa.u[iu]);
      double wi = 0.5 * (jsa.v[iv] - jsa.u[iu]);
      double phi = phase_signal(ws) + phase_idler(wi);
      if (!std::isfinite(phi)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "non-finite phase at grid point (iv=%zu, iu=%zu), Omega_s=%.6e, Omega_i=%.6e rad/s",
                      iv, iu, ws, wi);
        fail(ErrorCategory::numeric, buf);
      }
      row[iu] = phi;
      out.at(iv, iu) *= std::polar(1.0, phi);
    }
    for (std::size_t iu = 1; iu < jsa.nu(); ++iu) max_step = std::max(max_step, std::abs(row[iu] - row[iu - 1]));
  }
  out.max_phase_step_u = jsa.max_phase_step_u + max_step;
  return out;
}

inline JointSpectralAmplitude apply_dispersion(const JointSpectralAmplitude& jsa, const QuadraticPhase& signal,
                                               const QuadraticPhase& idler) {
  return apply_dispersion(jsa, PhaseFunction(signal), PhaseFunction(idler));
}

/// Smallest power-of-two difference axis that keeps the dispersed phase step
/// along u below π/4 (half the limit checked by arrival_difference_density).
inline JsaGrid grid_for_dispersion(const PhotonPairSource& source, const QuadraticPhase& signal,
                                   const QuadraticPhase& idler, std::size_t n_sum = 128) {
  JsaGrid g;
  g.n_sum = n_sum;
  double V = g.sum_span_sigmas * source.sum_bandwidth;
  double H = g.difference_span_sigmas * source.difference_marginal_sigma() + std::abs(source.center_difference());
  // ∂φ/∂u = (a_s − a_i)/2 + (b_s − b_i)·v/2 + (b_s + b_i)·u/2, extremal at the box corners.
  double slope = std::abs(signal.linear - idler.linear) / 2.0 +
                 std::abs(signal.quadratic - idler.quadratic) * V / 2.0 +
                 std::abs(signal.quadratic + idler.quadratic) * H / 2.0;
  std::size_t n = 64;
  while (slope * 2.0 * H / static_cast<double>(n - 1) > std::numbers::pi / 4.0) n *= 2;
  g.n_difference = std::max<std::size_t>(n, 512);
  return g;
}

/// Debug export: one row per grid point.
inline void write_jsa_csv(const JointSpectralAmplitude& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path);
  out << "sum_detuning_rad_s,difference_detuning_rad_s,signal_detuning_rad_s,idler_detuning_rad_s,re,im\n";
  char buf[256];
  for (std::size_t iv = 0; iv < f.nv(); ++iv)
    for (std::size_t iu = 0; iu < f.nu(); ++iu) {
      auto a = f.at(iv, iu);
      std::snprintf(buf, sizeof buf, "%.12e,%.12e,%.12e,%.12e,%.12e,%.12e\n", f.v[iv], f.u[iu],
                    0.5 * (f.v[iv] + f.u[iu]), 0.5 * (f.v[iv] - f.u[iu]), a.real(), a.imag());
      out << buf;
    }
}

}  // namespace qsync
