#pragma once

// Closed-loop path balancing: ambient temperature, drifting arm delays, the
// motorized delay line and the two-point dither lock on the HOM dip.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "qsync/calibration.hpp"
#include "qsync/seeding.hpp"
#include "qsync/timing_stats.hpp"

namespace qsync {

// ---- temperature --------------------------------------------------------------

/// How the sinusoid phases of individual spools relate to each other.
enum class PhaseMode {
  quadrature,  // each spool at right angles to the running sum: drift ∝ √(Σ l_k²)
  random,      // independent uniform phases from the seed
  common,      // every spool in phase
};

inline std::string_view to_string(PhaseMode m) {
  switch (m) {
    case PhaseMode::quadrature: return "quadrature";
    case PhaseMode::random: return "random";
    case PhaseMode::common: return "common";
  }
  return "quadrature";
}

inline std::optional<PhaseMode> phase_mode_from_string(std::string_view s) {
  for (auto m : {PhaseMode::quadrature, PhaseMode::random, PhaseMode::common})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct TemperatureProcess {
  double mean = 22.0;          // °C
  double amplitude = 0.25;     // °C (0.5 °C peak to peak)
  double period = 3600.0;      // s
  double noise_sigma = 5e-5;   // °C per sample
  double sample_interval = 1.0;  // s; the noise is held over each sample
  std::uint64_t seed = 0;
  PhaseMode phase_mode = PhaseMode::quadrature;

  void validate(const std::string& where = "temperature") const {
    std::vector<std::string> bad;
    if (!std::isfinite(mean)) bad.push_back(where + ".mean must be finite");
    if (!(amplitude >= 0.0)) bad.push_back(where + ".amplitude must be >= 0");
    if (!(period > 0.0)) bad.push_back(where + ".period must be > 0");
    if (!(noise_sigma >= 0.0)) bad.push_back(where + ".noise_sigma must be >= 0");
    if (!(sample_interval > 0.0)) bad.push_back(where + ".sample_interval must be > 0");
    if (!bad.empty()) {
      std::string msg = bad.front();
      for (std::size_t i = 1; i < bad.size(); ++i) msg += "; " + bad[i];
      fail(ErrorCategory::validation, msg);
    }
  }
  bool operator==(const TemperatureProcess&) const = default;
};

namespace detail {
/// Standard normal variate that is a pure function of `key` (Box-Muller on two hashes).
inline double hashed_normal(std::uint64_t key) {
  std::uint64_t a = splitmix64(key), b = splitmix64(a);
  double u1 = (double(a >> 11) + 0.5) * 0x1p-53;
  double u2 = double(b >> 11) * 0x1p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}
}  // namespace detail

/// mean + A·sin(2πt/P + phase) + white noise. `stream` separates the noise of different spools.
inline double temperature_at(const TemperatureProcess& p, double t, double phase = 0.0, std::uint64_t stream = 0) {
  if (!(t >= 0.0)) fail(ErrorCategory::precondition, "temperature_at: t must be >= 0");
  double T = p.mean + p.amplitude * std::sin(2.0 * std::numbers::pi * t / p.period + phase);
  if (p.noise_sigma > 0.0) {
    auto k = static_cast<std::uint64_t>(std::floor(t / p.sample_interval));
    T += p.noise_sigma * detail::hashed_normal(p.seed ^ splitmix64(stream ^ splitmix64(k)));
  }
  return T;
}

/// Phases for sinusoids of signed weights w_k.
inline std::vector<double> segment_phases(const std::vector<double>& weights, PhaseMode mode, std::uint64_t seed) {
  std::vector<double> phi(weights.size(), 0.0);
  if (mode == PhaseMode::common) return phi;
  if (mode == PhaseMode::random) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    for (auto& x : phi) x = u(rng);
    return phi;
  }
  std::complex<double> sum = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    phi[k] = std::abs(sum) > 0.0 ? std::arg(sum) + 0.5 * std::numbers::pi : 0.0;
    sum += weights[k] * std::polar(1.0, phi[k]);
  }
  return phi;
}

// ---- arm delays ---------------------------------------------------------------

enum class ArmSide { signal, idler };

/// Group delay of one arm at a uniform ambient temperature.
inline double link_delay_at(const FiberLink& link, ArmSide side, const PhotonPairSource& source, double temperature_c) {
  return arm_group_delay(link, side == ArmSide::signal ? source.signal_nm : source.idler_nm, temperature_c);
}

/// Both arms under a temperature process, each spool following its own phase.
class LinkDrift {
 public:
  LinkDrift(FiberLink signal, FiberLink idler, const PhotonPairSource& source, TemperatureProcess process,
            std::uint64_t phase_seed = 0)
      : signal_(std::move(signal)), idler_(std::move(idler)), source_(source), process_(process) {
    process_.validate();
    std::vector<double> w;
    auto add = [&](const FiberLink& link, double lambda, double sign) {
      for (const auto& s : link.segments()) {
        double T = process_.mean + s.temperature_offset_c;
        double dk = (group_delay_coefficient(link.dispersion(), lambda, T + 0.01) -
                     group_delay_coefficient(link.dispersion(), lambda, T - 0.01)) / 0.02;
        w.push_back(sign * dk * s.length_m);
      }
    };
    add(signal_, source_.signal_nm, -1.0);
    add(idler_, source_.idler_nm, 1.0);
    phases_ = segment_phases(w, process_.phase_mode, phase_seed);
  }

  double signal_delay(double t) const { return arm(signal_, source_.signal_nm, t, 0); }
  double idler_delay(double t) const { return arm(idler_, source_.idler_nm, t, signal_.segments().size()); }
  /// Idler minus signal group delay.
  double difference(double t) const { return idler_delay(t) - signal_delay(t); }
  const std::vector<double>& phases() const { return phases_; }
  const TemperatureProcess& process() const { return process_; }

 private:
  double arm(const FiberLink& link, double lambda, double t, std::size_t first) const {
    double tau = 0.0;
    for (std::size_t k = 0; k < link.segments().size(); ++k) {
      const auto& s = link.segments()[k];
      double T = temperature_at(process_, t, phases_[first + k], first + k) + s.temperature_offset_c;
      tau += group_delay_coefficient(link.dispersion(), lambda, T) * s.length_m;
    }
    return tau;
  }

  FiberLink signal_, idler_;
  PhotonPairSource source_;
  TemperatureProcess process_;
  std::vector<double> phases_;
};

// ---- actuator and lock --------------------------------------------------------

/// Motorized delay line in the idler arm. Settings lie on the resolution lattice within ±range.
class DelayActuator {
 public:
  double range = 330e-12;
  double resolution = 1e-15;

  DelayActuator() = default;
  DelayActuator(double range_s, double resolution_s) : range(range_s), resolution(resolution_s) { validate(); }

  void validate(const std::string& where = "actuator") const {
    if (!(resolution > 0.0)) fail(ErrorCategory::validation, where + ".resolution must be > 0");
    if (!(range > 0.0)) fail(ErrorCategory::validation, where + ".range must be > 0");
  }

  std::int64_t steps() const { return steps_; }
  double setting() const { return double(steps_) * resolution; }

  /// Moves to the lattice point nearest `target`; returns true if it had to clamp.
  bool set(double target) {
    auto limit = static_cast<std::int64_t>(std::floor(range / resolution + 1e-9));
    auto s = static_cast<std::int64_t>(std::llround(target / resolution));
    steps_ = std::clamp(s, -limit, limit);
    return steps_ != s;
  }

  bool operator==(const DelayActuator&) const = default;

 private:
  std::int64_t steps_ = 0;
};

/// Gaussian dip seen by the lock: coincidence rate ∝ 1 − V·exp(−r²/2s²).
struct DipModel {
  double visibility = 0.60;
  double fwhm = 3.25e-12;

  double sigma() const { return fwhm / kFwhmPerSigma; }
  double depth(double imbalance) const {
    double x = imbalance / sigma();
    return visibility * std::exp(-0.5 * x * x);
  }
  void validate() const {
    if (!(visibility > 0.0 && visibility <= 1.0)) fail(ErrorCategory::validation, "dip visibility must lie in (0, 1]");
    if (!(fwhm > 0.0)) fail(ErrorCategory::validation, "dip width must be > 0");
  }
  static DipModel from_source(const PhotonPairSource& source) {
    auto m = source_dip(source);
    return {m.visibility, m.width_fwhm};
  }
};

struct LockController {
  bool enabled = true;
  double probe_offset = 1.38e-12;  // dither points at ±probe_offset
  double dwell_per_probe = 10.0;   // s
  double gain = 1.0;
  double integral_gain = 0.5;
  double update_period = 20.0;     // s
  double baseline_rate = 2000.0;   // HOM coincidences/s away from the dip
  bool shot_noise = true;

  void validate(const std::string& where = "lock") const {
    std::vector<std::string> bad;
    if (!(probe_offset > 0.0)) bad.push_back(where + ".probe_offset must be > 0");
    if (!(dwell_per_probe > 0.0)) bad.push_back(where + ".dwell_per_probe must be > 0");
    if (!(update_period >= 2.0 * dwell_per_probe)) bad.push_back(where + ".update_period must be >= 2*dwell_per_probe");
    if (!(gain >= 0.0)) bad.push_back(where + ".gain must be >= 0");
    if (!(integral_gain >= 0.0)) bad.push_back(where + ".integral_gain must be >= 0");
    if (!(baseline_rate > 0.0)) bad.push_back(where + ".baseline_rate must be > 0");
    if (!bad.empty()) {
      std::string msg = bad.front();
      for (std::size_t i = 1; i < bad.size(); ++i) msg += "; " + bad[i];
      fail(ErrorCategory::validation, msg);
    }
  }
  bool operator==(const LockController&) const = default;
};

struct LockStep {
  double estimate = 0.0;    // imbalance inferred from the dither, s
  double correction = 0.0;  // change of the actuator setting, s
  double counts_plus = 0.0, counts_minus = 0.0;
  bool held = false;        // dip not significant; no correction applied
  bool clamped = false;     // actuator hit its range
};

namespace detail {
inline double dip_counts(const LockController& c, const DipModel& dip, double imbalance, double dwell,
                         std::mt19937_64& rng) {
  double mu = c.baseline_rate * dwell * (1.0 - dip.depth(imbalance));
  if (!c.shot_noise) return mu;
  return double(std::poisson_distribution<std::uint64_t>(mu)(rng));
}
}  // namespace detail

/// One dither cycle. `imbalance_plus` / `imbalance_minus` are the balance errors during the
/// two probe dwells (equal for a static link). For the Gaussian dip the count asymmetry is
/// e = tanh(−r·p/s²), which is inverted exactly; the correction is −(g·r̂ + I) with the
/// integral term I accumulating k_i·r̂.
inline LockStep lock_step(const LockController& c, const DipModel& dip, double imbalance_plus, double imbalance_minus,
                          DelayActuator& actuator, double& integral, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LockStep out;
  out.counts_plus = detail::dip_counts(c, dip, imbalance_plus + c.probe_offset, c.dwell_per_probe, rng);
  out.counts_minus = detail::dip_counts(c, dip, imbalance_minus - c.probe_offset, c.dwell_per_probe, rng);
  const double background = c.baseline_rate * c.dwell_per_probe;
  const double sum = out.counts_plus + out.counts_minus;
  const double drop = 2.0 * background - sum;
  if (!(drop > 3.0 * std::sqrt(2.0 * background))) {
    out.held = true;
    return out;
  }
  double e = std::clamp((out.counts_plus - out.counts_minus) / (sum - 2.0 * background), -0.99, 0.99);
  double s = dip.sigma();
  out.estimate = -(s * s / c.probe_offset) * std::atanh(e);
  integral += c.integral_gain * out.estimate;
  double before = actuator.setting();
  out.clamped = actuator.set(before - (c.gain * out.estimate + integral));
  out.correction = actuator.setting() - before;
  return out;
}

inline LockStep lock_step(const LockController& c, const DipModel& dip, double imbalance, DelayActuator& actuator,
                          double& integral, std::uint64_t seed) {
  return lock_step(c, dip, imbalance, imbalance, actuator, integral, seed);
}

// ---- scenario -----------------------------------------------------------------

struct AcquisitionPreset {
  std::string name;
  double efficiency;      // per detector
  double epoch_duration;  // s
};

/// tcspc-100s: 272.54 coincidences/s at 4·10⁶ pairs/s; et-12s: 12 kcps singles per timer.
inline const std::vector<AcquisitionPreset>& acquisition_presets() {
  static const std::vector<AcquisitionPreset> p{
      {"tcspc-100s", std::sqrt(272.54 / 4e6), 100.0},
      {"et-12s", 12e3 / 4e6, 12.0},
  };
  return p;
}

inline const AcquisitionPreset& acquisition_preset(std::string_view name) {
  for (const auto& p : acquisition_presets())
    if (p.name == name) return p;
  fail(ErrorCategory::config, "unknown acquisition preset '" + std::string(name) + "' (known: tcspc-100s, et-12s)");
}

inline constexpr double kDefaultDetectorJitter = 15e-12;

/// Instrument jitter that, with two default detectors, gives the calibrated total.
inline double default_instrument_jitter() {
  return std::sqrt(kCalibratedTotalJitter * kCalibratedTotalJitter - 2.0 * kDefaultDetectorJitter * kDefaultDetectorJitter);
}

struct SyncScenario {
  PhotonPairSource source;
  FiberLink link_signal = FiberLink::spans({5000.0, 4000.0, 1000.0});
  FiberLink link_idler = FiberLink::spans({5000.0, 4000.0, 1000.0});
  TemperatureProcess temperature;
  LockController lock;
  DelayActuator actuator;
  std::optional<DipModel> dip;  // computed from the source when empty
  DetectorModel detector_a{std::sqrt(272.54 / 4e6), kDefaultDetectorJitter, 0.0};
  DetectorModel detector_b{std::sqrt(272.54 / 4e6), kDefaultDetectorJitter, 0.0};
  ClockModel clock_a, clock_b;
  double instrument_jitter = default_instrument_jitter();
  double epoch_duration = 100.0;
  double bin_width = 4e-12;
  double histogram_window = 5e-9;
  bool out_of_loop = true;
  double initial_imbalance = 0.0;

  void apply(const AcquisitionPreset& p) {
    detector_a.efficiency = detector_b.efficiency = p.efficiency;
    epoch_duration = p.epoch_duration;
  }
};

struct SyncEvent {
  double time = 0.0;
  std::string kind;  // lock_loss, reacquired, scan_restart, hold, actuator_limit, epoch_failed
  std::string detail;
};

struct ActuatorSample {
  double time = 0.0;       // end of the update window, s
  double setting = 0.0;    // s, on the resolution lattice
  double imbalance = 0.0;  // true balance error at `time`, s
  double estimate = 0.0;   // lock's estimate during the window, s
  bool locked = true;
  bool held = false;
};

struct SyncResult {
  OffsetSeries in_loop_residual;    // window-averaged true imbalance, one per update
  OffsetSeries out_of_loop_offsets;  // one per acquisition epoch
  std::vector<ActuatorSample> actuator_log;
  std::vector<SyncEvent> events;
  std::size_t lock_losses = 0;
  double calibration_center = 0.0, calibration_stderr = 0.0;
  double predicted_offset = 0.0;  // clock offset minus the arms' group-delay difference when the lock starts
  DipModel dip;

  std::size_t count(std::string_view kind) const {
    return std::size_t(std::count_if(events.begin(), events.end(), [&](const SyncEvent& e) { return e.kind == kind; }));
  }
};

namespace detail {
/// Outward scan sequence 0, +h, −h, +2h, −2h, …
inline double scan_offset(std::size_t index, double step) {
  if (index == 0) return 0.0;
  double k = double((index + 1) / 2);
  return (index % 2 ? 1.0 : -1.0) * k * step;
}

inline std::string ps(double s) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g ps", s * 1e12);
  return buf;
}
}  // namespace detail

/// Runs the loop for `duration` seconds. `progress`, if set, receives the fraction done.
inline SyncResult run_sync(const SyncScenario& sc, double duration, std::uint64_t seed,
                           const std::function<void(double)>& progress = {}) {
  sc.source.validate();
  sc.lock.validate();
  sc.actuator.validate();
  sc.temperature.validate();
  const LockController& lc = sc.lock;
  const double U = lc.update_period;
  const auto n_updates = static_cast<std::size_t>(std::floor(duration / U + 1e-9));
  if (n_updates < 3) fail(ErrorCategory::precondition, "sync run must cover at least 3 update periods");

  SyncResult res;
  res.dip = sc.dip ? *sc.dip : DipModel::from_source(sc.source);
  res.dip.validate();
  const DipModel& dip = res.dip;

  TemperatureProcess proc = sc.temperature;
  proc.seed = child_seed(seed, "sync/temperature");
  const LinkDrift drift(sc.link_signal, sc.link_idler, sc.source, proc, child_seed(seed, "sync/phases"));
  const double L0 = drift.difference(0.0);

  // Setting history: (time from which valid, setting).
  std::vector<std::pair<double, double>> history;
  DelayActuator act = sc.actuator;
  if (act.set(sc.initial_imbalance))
    res.events.push_back({0.0, "actuator_limit", "initial imbalance outside the delay-line range"});
  history.emplace_back(0.0, act.setting());
  auto move_to = [&](double t, double target) {
    bool clamped = act.set(target);
    if (act.setting() != history.back().second) history.emplace_back(t, act.setting());
    return clamped;
  };
  auto setting_at = [&](double t) {
    auto it = std::upper_bound(history.begin(), history.end(), t,
                               [](double x, const std::pair<double, double>& h) { return x < h.first; });
    return it == history.begin() ? history.front().second : std::prev(it)->second;
  };
  auto imbalance = [&](double t) { return drift.difference(t) - L0 + setting_at(t); };
  auto window_mean = [&](double t0, double len) {
    int n = std::max(8, int(std::ceil(len)));
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += imbalance(t0 + (i + 0.5) * len / n);
    return s / n;
  };

  const double dwell = lc.dwell_per_probe;
  const double N0 = lc.baseline_rate * dwell;
  bool locked = true;
  double integral = 0.0;
  double scan_center = 0.0;
  std::size_t scan_index = 0;
  std::mt19937_64 scan_rng(child_seed(seed, "sync/scan"));

  for (std::size_t k = 0; k < n_updates; ++k) {
    const double t = double(k) * U;
    ActuatorSample log;
    log.time = t + U;
    bool scanned = false;
    if (lc.enabled && locked) {
      double dL = std::abs(drift.difference(t + U) - drift.difference(t));
      double r1 = imbalance(t + 0.5 * dwell), r2 = imbalance(t + 1.5 * dwell);
      std::string why;
      if (dL > dip.fwhm)
        why = "link drift of " + detail::ps(dL) + " within one update window exceeds the dip width";
      else if (std::max(std::abs(r1), std::abs(r2)) > 2.0 * dip.fwhm)
        why = "imbalance " + detail::ps(std::max(std::abs(r1), std::abs(r2))) + " outside the capture range";
      if (!why.empty()) {
        locked = false;
        ++res.lock_losses;
        res.events.push_back({t, "lock_loss", why});
        scan_center = act.setting();
        scan_index = 0;
      } else {
        DelayActuator trial = act;
        auto step = lock_step(lc, dip, r1, r2, trial, integral, child_seed(seed, "sync/lock/" + std::to_string(k)));
        log.estimate = step.estimate;
        log.held = step.held;
        if (step.held) res.events.push_back({t, "hold", "dip not significant in this window"});
        if (step.clamped) res.events.push_back({t + U, "actuator_limit", "correction clamped at the range limit"});
        move_to(t + U, trial.setting());
      }
    } else if (lc.enabled) {
      scanned = true;
      const auto points = static_cast<std::size_t>(std::floor(U / dwell + 1e-9));
      for (std::size_t j = 0; j < points && !locked; ++j, ++scan_index) {
        double off = detail::scan_offset(scan_index, 0.25 * dip.fwhm);
        if (std::abs(off) > 2.0 * act.range) {
          res.events.push_back({t + j * dwell, "scan_restart", "no dip within the delay-line range"});
          scan_center = act.setting();
          scan_index = 0;
          off = 0.0;
        }
        double tp = t + double(j) * dwell;
        move_to(tp, scan_center + off);
        double c = detail::dip_counts(lc, dip, imbalance(tp + 0.5 * dwell), dwell, scan_rng);
        if (N0 - c > 3.0 * std::sqrt(N0)) {
          locked = true;
          res.events.push_back({tp + dwell, "reacquired", "dip found at setting " + detail::ps(act.setting())});
        }
      }
    }
    log.locked = lc.enabled && locked && !scanned;
    log.setting = act.setting();
    log.imbalance = imbalance(t + U);
    res.actuator_log.push_back(log);
    res.in_loop_residual.times.push_back(t + 0.5 * U);
    if (progress && (k % 64 == 0)) progress(0.5 * double(k) / double(n_updates));
  }
  for (std::size_t k = 0; k < n_updates; ++k)
    res.in_loop_residual.offsets.push_back(window_mean(double(k) * U, U));

  res.predicted_offset = (sc.clock_a.initial_offset - sc.clock_b.initial_offset) - L0;
  if (!sc.out_of_loop) return res;

  // Out-of-loop: back-to-back calibration with co-located clocks, then one fit per epoch.
  const double E = sc.epoch_duration;
  if (!(E > 0.0)) fail(ErrorCategory::config, "epoch_duration must be > 0");
  const auto n_epochs = static_cast<std::size_t>(std::floor(duration / E + 1e-9));
  auto b2b = arrival_difference_density(gaussian_jsa(sc.source, 512), sc.detector_a, sc.detector_b, sc.instrument_jitter);
  {
    auto [a, b] = simulate_timestamps(sc.source.pair_rate, b2b, {}, {}, sc.detector_a, sc.detector_b, E,
                                      child_seed(seed, "sync/calibration"));
    auto fit = fit_gaussian(coincidence_histogram(a, b, sc.bin_width, sc.histogram_window));
    res.calibration_center = fit.center;
    res.calibration_stderr = fit.center_stderr;
  }
  auto ph_s = fiber_phase(sc.link_signal, sc.source.mean_nm(), proc.mean);
  auto ph_i = fiber_phase(sc.link_idler, sc.source.mean_nm(), proc.mean);
  auto jsa = apply_dispersion(gaussian_jsa(sc.source, grid_for_dispersion(sc.source, ph_s, ph_i)), ph_s, ph_i);
  auto density = arrival_difference_density(jsa, sc.detector_a, sc.detector_b, sc.instrument_jitter);
  // The density is centred on the mean-temperature delay difference; shift each epoch to the actual one.
  const double L_mean = path_delay_difference(sc.link_signal, sc.link_idler, sc.source, proc.mean).group_delay;

  for (std::size_t j = 0; j < n_epochs; ++j) {
    const double t0 = double(j) * E;
    ClockModel cb = sc.clock_b;
    cb.initial_offset += window_mean(t0, E) + (L0 - L_mean);
    SimulationOptions opt;
    opt.origin = t0;
    try {
      auto [a, b] = simulate_timestamps(sc.source.pair_rate, density, sc.clock_a, cb, sc.detector_a, sc.detector_b, E,
                                        child_seed(seed, "sync/epoch/" + std::to_string(j)), opt);
      auto fit = fit_gaussian(coincidence_histogram(a, b, sc.bin_width, sc.histogram_window));
      auto est = estimate_offset(fit, res.calibration_center);
      res.out_of_loop_offsets.times.push_back(t0 + 0.5 * E);
      res.out_of_loop_offsets.offsets.push_back(est.offset);
      res.out_of_loop_offsets.uncertainties.push_back(est.uncertainty);
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::fit) throw;
      res.events.push_back({t0, "epoch_failed", e.what()});
    }
    if (progress && (j % 16 == 0)) progress(0.5 + 0.5 * double(j) / double(n_epochs));
  }
  if (progress) progress(1.0);
  return res;
}

}  // namespace qsync
