#pragma once

// Numerical calibration of the free source/instrument parameters against the
// three observables they control: dip FWHM, back-to-back coincidence FWHM and
// the 10 km coincidence FWHM, plus the overall dip visibility.

#include <cmath>
#include <functional>

#include "qsync/biphoton.hpp"
#include "qsync/detection_timing.hpp"
#include "qsync/hom.hpp"

namespace qsync {

struct CalibrationTargets {
  double dip_fwhm = 3.25e-12;
  double visibility = 0.60;
  double back_to_back_fwhm = 62e-12;
  double dispersed_fwhm = 514.8e-12;
  double dispersed_arm_length_m = 10'000.0;
  double temperature_c = 22.0;
};

struct CalibrationResult {
  PhotonPairSource source;
  double total_jitter = 0.0;  // √(σ_a² + σ_b² + σ_instr²)
};

/// Dip metrics of an undispersed source on the default 512² grid.
inline DipMetrics source_dip(const PhotonPairSource& src, std::size_t grid = 512, double half_range = 10e-12) {
  auto f = gaussian_jsa(src, grid);
  return dip_metrics(hom_profile(f, delay_grid(half_range, 801), src.distinguishability));
}

/// Arrival-difference density with equal links of `length_m` per arm (0 for back-to-back).
inline ArrivalDensity equal_arm_density(const PhotonPairSource& src, double length_m, double total_jitter,
                                        double temperature_c = 22.0) {
  DetectorModel none;
  if (length_m <= 0.0) return arrival_difference_density(gaussian_jsa(src, 512), none, none, total_jitter);
  auto link = FiberLink::spans({length_m});
  auto ph = fiber_phase(link, src.mean_nm(), temperature_c);
  auto grid = grid_for_dispersion(src, ph, ph);
  auto f = apply_dispersion(gaussian_jsa(src, grid), ph, ph);
  return arrival_difference_density(f, none, none, total_jitter);
}

namespace detail {
/// Bisection on a monotone bracket [lo, hi] for g(x) = 0.
inline double bisect(const std::function<double(double)>& g, double lo, double hi, double xtol) {
  double glo = g(lo);
  for (int i = 0; i < 200 && hi - lo > xtol; ++i) {
    double mid = 0.5 * (lo + hi);
    double gm = g(mid);
    if ((gm < 0) == (glo < 0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}
}  // namespace detail

inline CalibrationResult calibrate(PhotonPairSource src, const CalibrationTargets& t = {}) {
  // σ₋: the dip is Gaussian with FWHM ∝ 1/σ₋, so a fixed-point rescale converges quickly.
  src.spectral_tilt = 0.0;
  src.distinguishability = 1.0;
  src.difference_bandwidth = difference_bandwidth_for_dip_width(t.dip_fwhm);
  for (int i = 0; i < 4; ++i) src.difference_bandwidth *= source_dip(src).width_fwhm / t.dip_fwhm;

  CalibrationResult out;
  out.total_jitter = detail::bisect(
      [&](double sj) { return equal_arm_density(src, 0.0, sj).fwhm() - t.back_to_back_fwhm; }, 0.0,
      t.back_to_back_fwhm, 1e-16);

  double kappa_hi = 0.2;
  src.spectral_tilt = detail::bisect(
      [&](double k) {
        PhotonPairSource s = src;
        s.spectral_tilt = k;
        return equal_arm_density(s, t.dispersed_arm_length_m, out.total_jitter, t.temperature_c).fwhm() -
               t.dispersed_fwhm;
      },
      0.0, kappa_hi, 1e-7);

  src.distinguishability = 1.0;
  double v1 = source_dip(src).visibility;
  src.distinguishability = std::min(1.0, t.visibility / v1);
  out.source = src;
  return out;
}

}  // namespace qsync
