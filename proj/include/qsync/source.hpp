#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qsync/error.hpp"

namespace qsync {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2·sqrt(2·ln 2)

/// Angular frequency (rad/s) of a vacuum wavelength in nm.
inline double omega_from_nm(double nm) { return 2.0 * std::numbers::pi * kSpeedOfLight / (nm * 1e-9); }
inline double nm_from_omega(double omega) { return 2.0 * std::numbers::pi * kSpeedOfLight / omega * 1e9; }

/// Spectral parameters of the SPDC pair source.
///
/// Bandwidths are standard deviations of |f|² along the sum (v = Ω_s + Ω_i) and
/// difference (u = Ω_s − Ω_i) detuning coordinates. `spectral_tilt` couples
/// them: the difference-frequency centre moves by tilt·v across the pump
/// band, which models type-II spectral distinguishability.
struct PhotonPairSource {
  double signal_nm = 1574.4;
  double idler_nm = 1574.7;
  double pump_nm = 787.0;
  double pump_bandwidth_nm = 25.0;  // FWHM
  double repetition_rate_hz = 75e6;
  double pair_rate = 4.0e6;             // pairs/s leaving the source
  // Calibrated: σ₊ from the pump band, σ₋ to a 3.25 ps dip, the tilt to a
  // 514.8 ps coincidence width after 10 km per arm, and the distinguishability
  // factor to 60 % visibility (`qsync calibrate`).
  double sum_bandwidth = 3.228742358e13;        // σ₊, rad/s
  double difference_bandwidth = 7.245600139e11;  // σ₋, rad/s
  double spectral_tilt = 0.01994395256;
  double distinguishability = 0.8252108811;

  double signal_omega() const { return omega_from_nm(signal_nm); }
  double idler_omega() const { return omega_from_nm(idler_nm); }
  /// Grid reference frequency: the mean of the two centre frequencies.
  double mean_omega() const { return 0.5 * (signal_omega() + idler_omega()); }
  double mean_nm() const { return nm_from_omega(mean_omega()); }
  /// Centre of the difference detuning, ω₀,s − ω₀,i.
  double center_difference() const { return signal_omega() - idler_omega(); }
  /// Standard deviation of the difference-frequency marginal.
  double difference_marginal_sigma() const {
    return std::hypot(difference_bandwidth, spectral_tilt * sum_bandwidth);
  }

  /// Throws a validation error listing every violated invariant.
  void validate() const {
    std::vector<std::string> bad;
    auto positive = [&](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) bad.push_back(std::string(name) + " must be > 0");
    };
    positive(signal_nm, "signal_nm");
    positive(idler_nm, "idler_nm");
    positive(pump_nm, "pump_nm");
    positive(pump_bandwidth_nm, "pump_bandwidth_nm");
    positive(repetition_rate_hz, "repetition_rate_hz");
    positive(pair_rate, "pair_rate");
    positive(sum_bandwidth, "sum_bandwidth");
    positive(difference_bandwidth, "difference_bandwidth");
    if (!std::isfinite(spectral_tilt)) bad.push_back("spectral_tilt must be finite");
    if (!(distinguishability >= 0.0 && distinguishability <= 1.0))
      bad.push_back("distinguishability must lie in [0, 1]");
    if (bad.empty()) {
      double sum = 1.0 / signal_nm + 1.0 / idler_nm;
      if (std::abs(sum * pump_nm - 1.0) > 1e-3)
        bad.push_back("energy conservation violated: 1/pump_nm differs from 1/signal_nm + 1/idler_nm by more than 0.1%");
    }
    if (!bad.empty()) {
      std::string msg = "invalid photon pair source:";
      for (const auto& b : bad) msg += "\n  " + b;
      fail(ErrorCategory::validation, msg);
    }
  }

  bool operator==(const PhotonPairSource&) const = default;
};

/// Total timing jitter (detectors and timer in quadrature) giving a 62 ps
/// back-to-back coincidence FWHM with the default source.
inline constexpr double kCalibratedTotalJitter = 26.29262829e-12;

/// σ₊ implied by a Gaussian pump of the given intensity FWHM (energy conservation).
inline double sum_bandwidth_from_pump(double pump_nm, double pump_fwhm_nm) {
  double lambda = pump_nm * 1e-9;
  double fwhm_omega = 2.0 * std::numbers::pi * kSpeedOfLight * (pump_fwhm_nm * 1e-9) / (lambda * lambda);
  return fwhm_omega / kFwhmPerSigma;
}

/// σ₋ giving a Gaussian HOM dip of the given FWHM (the dip is exp(−σ₋²δ²/2)).
inline double difference_bandwidth_for_dip_width(double dip_fwhm) { return kFwhmPerSigma / dip_fwhm; }

}  // namespace qsync
