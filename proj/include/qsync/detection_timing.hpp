#pragma once

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qsync/biphoton.hpp"
#include "qsync/error.hpp"

namespace qsync {

struct DetectorModel {
  double efficiency = 1.0;
  double timing_jitter_sigma = 0.0;  // s
  double dark_rate = 0.0;            // counts/s

  void validate(const std::string& where = "detector") const {
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) fail(ErrorCategory::validation, where + ".efficiency must lie in [0, 1]");
    if (!(timing_jitter_sigma >= 0.0)) fail(ErrorCategory::validation, where + ".timing_jitter must be >= 0");
    if (!(dark_rate >= 0.0)) fail(ErrorCategory::validation, where + ".dark_rate must be >= 0");
  }
  bool operator==(const DetectorModel&) const = default;
};

/// A site clock: reading = t + initial_offset + fractional_frequency_offset·t + white PM noise.
struct ClockModel {
  double initial_offset = 0.0;               // s
  double fractional_frequency_offset = 0.0;  // dimensionless
  double white_pm_sigma = 0.0;               // s per reading

  void validate(const std::string& where = "clock") const {
    if (!std::isfinite(initial_offset) || !std::isfinite(fractional_frequency_offset) ||
        !std::isfinite(white_pm_sigma) || white_pm_sigma < 0.0)
      fail(ErrorCategory::validation, where + " fields must be finite (white_pm_sigma >= 0)");
  }
  bool operator==(const ClockModel&) const = default;
};

/// Sorted detection times in one site's clock timescale. `origin` is the
/// absolute start of the acquisition; `times` are relative to it, which keeps
/// femtosecond resolution over long runs.
struct TimestampStream {
  std::string detector_id;
  double origin = 0.0;
  std::vector<double> times;

  bool strictly_increasing() const {
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) return false;
    return true;
  }
};

/// Sampled probability density of the arrival-time difference t_s − t_i.
struct ArrivalDensity {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> pdf;  // 1/s; Σ pdf·dt = 1

  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
  double mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < pdf.size(); ++k) m += time(k) * pdf[k];
    return m * dt;
  }
  double stddev() const {
    double m = mean(), v = 0.0;
    for (std::size_t k = 0; k < pdf.size(); ++k) v += (time(k) - m) * (time(k) - m) * pdf[k];
    return std::sqrt(v * dt);
  }
  double fwhm() const {
    std::size_t k = static_cast<std::size_t>(std::max_element(pdf.begin(), pdf.end()) - pdf.begin());
    double half = 0.5 * pdf[k];
    std::size_t l = k, r = k;
    while (l > 0 && pdf[l] >= half) --l;
    while (r + 1 < pdf.size() && pdf[r] >= half) ++r;
    if (pdf[l] >= half || pdf[r] >= half) fail(ErrorCategory::resolution, "density does not fall to half maximum inside its range");
    double tl = time(l) + dt * (half - pdf[l]) / (pdf[l + 1] - pdf[l]);
    double tr = time(r - 1) + dt * (pdf[r - 1] - half) / (pdf[r - 1] - pdf[r]);
    return tr - tl;
  }

  /// Inverse-CDF sampler over the piecewise-linear density.
  std::piecewise_linear_distribution<double> sampler() const {
    std::vector<double> t(pdf.size());
    for (std::size_t k = 0; k < pdf.size(); ++k) t[k] = time(k);
    return std::piecewise_linear_distribution<double>(t.begin(), t.end(), pdf.begin());
  }
};

namespace detail {

/// Discrete convolution with a normalized Gaussian kernel; the result grid
/// is extended by 8σ on both sides.
inline ArrivalDensity gaussian_smear(const ArrivalDensity& in, double sigma) {
  if (!(sigma > 0.0)) return in;
  long K = static_cast<long>(std::ceil(8.0 * sigma / in.dt));
  std::vector<double> g(2 * K + 1);
  double s = 0.0;
  for (long m = -K; m <= K; ++m) s += g[m + K] = std::exp(-0.5 * std::pow(m * in.dt / sigma, 2));
  for (auto& x : g) x /= s;
  ArrivalDensity out;
  out.dt = in.dt;
  out.t0 = in.t0 - K * in.dt;
  out.pdf.assign(in.pdf.size() + 2 * K, 0.0);
  for (std::size_t j = 0; j < in.pdf.size(); ++j) {
    double a = in.pdf[j];
    if (a == 0.0) continue;
    double* o = out.pdf.data() + j;
    for (std::size_t m = 0; m < g.size(); ++m) o[m] += a * g[m];
  }
  return out;
}

inline void trim_tails(ArrivalDensity& d, double rel = 1e-12) {
  double peak = *std::max_element(d.pdf.begin(), d.pdf.end());
  std::size_t b = 0, e = d.pdf.size();
  while (b + 1 < e && d.pdf[b] < rel * peak) ++b;
  while (e > b + 1 && d.pdf[e - 1] < rel * peak) --e;
  if (b > 0) --b;
  if (e < d.pdf.size()) ++e;
  d.t0 += d.dt * static_cast<double>(b);
  d.pdf = std::vector<double>(d.pdf.begin() + static_cast<long>(b), d.pdf.begin() + static_cast<long>(e));
}

}  // namespace detail

/// Density of T = t_s − t_i from the (dispersed) JSA, convolved with the
/// Gaussian jitter kernel √(σ_a² + σ_b² + σ_instr²).
///
/// T is conjugate to u/2, so each sum-frequency row is Fourier transformed
/// along u and |·|² is summed over rows.
inline ArrivalDensity arrival_difference_density(const JointSpectralAmplitude& jsa, const DetectorModel& detector_a,
                                                 const DetectorModel& detector_b, double instrument_jitter,
                                                 std::size_t zero_pad = 4) {
  if (std::abs(jsa.norm() - 1.0) > 1e-6) fail(ErrorCategory::precondition, "JSA is not normalized");
  if (!(instrument_jitter >= 0.0) || !(detector_a.timing_jitter_sigma >= 0.0) || !(detector_b.timing_jitter_sigma >= 0.0))
    fail(ErrorCategory::precondition, "jitters must be >= 0");
  if (jsa.max_phase_step_u > std::numbers::pi / 2.0) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "JSA difference axis too coarse for the applied dispersion: phase step %.3f rad exceeds pi/2 "
                  "(use grid_for_dispersion or increase n_difference beyond %zu)",
                  jsa.max_phase_step_u, jsa.nu());
    fail(ErrorCategory::resolution, buf);
  }
  const std::size_t nu = jsa.nu();
  const std::size_t M = nu * std::max<std::size_t>(zero_pad, 1);
  fftw_complex* buf = fftw_alloc_complex(M);
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(M), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  std::vector<double> power(M, 0.0);
  for (std::size_t iv = 0; iv < jsa.nv(); ++iv) {
    for (std::size_t j = 0; j < M; ++j) {
      if (j < nu) {
        buf[j][0] = jsa.at(iv, j).real();
        buf[j][1] = jsa.at(iv, j).imag();
      } else {
        buf[j][0] = buf[j][1] = 0.0;
      }
    }
    fftw_execute(plan);
    for (std::size_t k = 0; k < M; ++k) power[k] += buf[k][0] * buf[k][0] + buf[k][1] * buf[k][1];
  }
  fftw_destroy_plan(plan);
  fftw_free(buf);

  // Bin k ↔ T = 4πk/(M·Δu); the upper half holds negative T.
  ArrivalDensity d;
  d.dt = 4.0 * std::numbers::pi / (static_cast<double>(M) * jsa.du());
  d.t0 = -static_cast<double>(M / 2) * d.dt;
  d.pdf.resize(M);
  for (std::size_t k = 0; k < M; ++k) d.pdf[k] = power[(k + M / 2) % M];
  double total = 0.0;
  for (double p : d.pdf) total += p;
  for (auto& p : d.pdf) p /= total * d.dt;
  detail::trim_tails(d);

  double sj = std::sqrt(detector_a.timing_jitter_sigma * detector_a.timing_jitter_sigma +
                        detector_b.timing_jitter_sigma * detector_b.timing_jitter_sigma +
                        instrument_jitter * instrument_jitter);
  if (sj > 0.0) {
    d = detail::gaussian_smear(d, sj);
    detail::trim_tails(d);
  }
  double s = 0.0;
  for (double p : d.pdf) s += p;
  for (auto& p : d.pdf) p /= s * d.dt;
  return d;
}

struct SimulationOptions {
  double origin = 0.0;               // absolute start time of the acquisition, s
  double max_events = 4.0e8;         // memory cap on expected events per run
};

namespace detail {

/// Sorted Poisson arrival times on [0, duration).
inline void poisson_times(double rate, double duration, std::mt19937_64& rng, std::vector<double>& out) {
  out.clear();
  if (!(rate > 0.0)) return;
  std::exponential_distribution<double> gap(rate);
  out.reserve(static_cast<std::size_t>(rate * duration * 1.05 + 16));
  for (double t = gap(rng); t < duration; t += gap(rng)) out.push_back(t);
}

/// Insertion sort; linear on the nearly sorted streams produced here.
inline void insertion_sort(std::vector<double>& x) {
  for (std::size_t i = 1; i < x.size(); ++i) {
    double v = x[i];
    std::size_t j = i;
    while (j > 0 && x[j - 1] > v) {
      x[j] = x[j - 1];
      --j;
    }
    x[j] = v;
  }
}

inline void make_strict(std::vector<double>& x) { x.erase(std::unique(x.begin(), x.end()), x.end()); }

inline void apply_clock(std::vector<double>& t, const ClockModel& clock, double origin, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool noisy = clock.white_pm_sigma > 0.0;
  for (auto& x : t) {
    double r = x + clock.initial_offset + clock.fractional_frequency_offset * (origin + x);
    if (noisy) r += clock.white_pm_sigma * noise(rng);
    x = r;
  }
}

}  // namespace detail

/// Two-site detection record for one acquisition.
///
/// Pairs are emitted as a Poisson process. Each pair is detected at both
/// sites with probability η_a·η_b (signal at t + T, idler at t, T drawn from
/// `density`, which already contains detector and instrument jitter), at one
/// site only with η_a(1 − η_b) or (1 − η_a)η_b. Dark counts are independent
/// Poisson streams. Each stream is finally read out against its own clock.
inline std::pair<TimestampStream, TimestampStream> simulate_timestamps(
    double pair_rate, const ArrivalDensity& density, const ClockModel& clock_a, const ClockModel& clock_b,
    const DetectorModel& detector_a, const DetectorModel& detector_b, double duration, std::uint64_t seed,
    const SimulationOptions& options = {}) {
  if (!(duration > 0.0)) fail(ErrorCategory::precondition, "duration must be > 0");
  if (!(pair_rate >= 0.0)) fail(ErrorCategory::precondition, "pair rate must be >= 0");
  detector_a.validate("detector_a");
  detector_b.validate("detector_b");
  clock_a.validate("clock_a");
  clock_b.validate("clock_b");
  const double ea = detector_a.efficiency, eb = detector_b.efficiency;
  const double rate_both = pair_rate * ea * eb;
  const double rate_a = pair_rate * ea * (1.0 - eb) + detector_a.dark_rate;
  const double rate_b = pair_rate * (1.0 - ea) * eb + detector_b.dark_rate;
  double expected = (2.0 * rate_both + rate_a + rate_b) * duration;
  if (expected > options.max_events) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "expected %.3g events exceeds the cap of %.3g; split the run into shorter epochs",
                  expected, options.max_events);
    fail(ErrorCategory::resource, buf);
  }

  std::mt19937_64 rng(seed);
  std::vector<double> both, only_a, only_b;
  detail::poisson_times(rate_both, duration, rng, both);
  detail::poisson_times(rate_a, duration, rng, only_a);
  detail::poisson_times(rate_b, duration, rng, only_b);

  std::vector<double> ta(both.size()), tb = both;
  auto diff = density.sampler();
  for (std::size_t k = 0; k < both.size(); ++k) ta[k] = both[k] + diff(rng);

  TimestampStream a{"a", options.origin, {}}, b{"b", options.origin, {}};
  a.times.resize(ta.size() + only_a.size());
  std::merge(ta.begin(), ta.end(), only_a.begin(), only_a.end(), a.times.begin());
  b.times.resize(tb.size() + only_b.size());
  std::merge(tb.begin(), tb.end(), only_b.begin(), only_b.end(), b.times.begin());
  for (auto* s : {&a, &b}) detail::insertion_sort(s->times);

  detail::apply_clock(a.times, clock_a, options.origin, rng);
  detail::apply_clock(b.times, clock_b, options.origin, rng);
  for (auto* s : {&a, &b}) {
    detail::insertion_sort(s->times);
    detail::make_strict(s->times);
  }
  return {std::move(a), std::move(b)};
}

/// Histogram of t_a − t_b with bins centred on k·bin_width, |k·bin_width| ≤ window.
struct CoincidenceHistogram {
  double bin_width = 0.0;
  double window = 0.0;
  std::vector<std::uint64_t> bins;
  std::uint64_t total_coincidences = 0;

  long half_bins() const { return static_cast<long>(bins.size() / 2); }
  double center(std::size_t i) const { return (static_cast<double>(i) - static_cast<double>(half_bins())) * bin_width; }
};

inline CoincidenceHistogram coincidence_histogram(const TimestampStream& a, const TimestampStream& b, double bin_width,
                                                  double window) {
  if (!(bin_width > 0.0) || !(window >= bin_width))
    fail(ErrorCategory::precondition, "need bin_width > 0 and window >= bin_width");
  for (const auto* s : {&a, &b})
    for (std::size_t i = 1; i < s->times.size(); ++i)
      if (s->times[i] < s->times[i - 1])
        fail(ErrorCategory::precondition, "stream '" + s->detector_id + "' is not sorted at index " + std::to_string(i));
  CoincidenceHistogram h;
  h.bin_width = bin_width;
  h.window = window;
  const long K = static_cast<long>(std::floor(window / bin_width + 1e-9));
  h.bins.assign(2 * K + 1, 0);
  const double shift = a.origin - b.origin;  // absolute(t_a) − absolute(t_b) = shift + (a − b)
  const double reach = (static_cast<double>(K) + 0.5) * bin_width;
  std::size_t lo = 0;
  const auto& tb = b.times;
  for (double ta : a.times) {
    double x = ta + shift;
    while (lo < tb.size() && tb[lo] < x - reach) ++lo;
    for (std::size_t j = lo; j < tb.size() && tb[j] <= x + reach; ++j) {
      long k = std::lround((x - tb[j]) / bin_width);
      if (k >= -K && k <= K) {
        ++h.bins[static_cast<std::size_t>(k + K)];
        ++h.total_coincidences;
      }
    }
  }
  return h;
}

struct GaussianFitResult {
  double center = 0.0;
  double sigma = 0.0;
  double amplitude = 0.0;   // counts/bin at the peak
  double background = 0.0;  // counts/bin
  double center_stderr = 0.0;
  double sigma_stderr = 0.0;
  double amplitude_stderr = 0.0;
  double background_stderr = 0.0;
  double peak_counts = 0.0;  // area of the Gaussian in counts
  int iterations = 0;
};

struct FitOptions {
  int max_iterations = 200;
  double window_sigmas = 4.0;
  double min_peak_to_background = 3.0;
  double min_significance = 5.0;
};

namespace detail {

struct PoissonGaussFit {
  const std::vector<double>& x;
  const std::vector<double>& n;

  double loglik(const Eigen::Vector4d& p) const {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = (x[i] - p[1]) / p[2];
      double mu = std::max(p[0] * std::exp(-0.5 * z * z) + p[3], 1e-300);
      ll += n[i] * std::log(mu) - mu;
    }
    return ll;
  }
  void fisher(const Eigen::Vector4d& p, Eigen::Matrix4d& I, Eigen::Vector4d& g) const {
    I.setZero();
    g.setZero();
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = (x[i] - p[1]) / p[2];
      double e = std::exp(-0.5 * z * z);
      double mu = std::max(p[0] * e + p[3], 1e-12);
      Eigen::Vector4d J(e, p[0] * e * z / p[2], p[0] * e * z * z / p[2], 1.0);
      I.noalias() += J * J.transpose() / mu;
      g += J * ((n[i] - mu) / mu);
    }
  }
  /// Observed information −∂²ℓ/∂p², which converges much faster than the expected one on sparse bins.
  void observed(const Eigen::Vector4d& p, Eigen::Matrix4d& H) const {
    H.setZero();
    const double a = p[0], s = p[2];
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = (x[i] - p[1]) / s;
      double e = std::exp(-0.5 * z * z);
      double mu = std::max(a * e + p[3], 1e-12);
      Eigen::Vector4d J(e, a * e * z / s, a * e * z * z / s, 1.0);
      Eigen::Matrix4d d2 = Eigen::Matrix4d::Zero();
      d2(0, 1) = d2(1, 0) = e * z / s;
      d2(0, 2) = d2(2, 0) = e * z * z / s;
      d2(1, 1) = a * e * (z * z - 1.0) / (s * s);
      d2(1, 2) = d2(2, 1) = a * e * z * (z * z - 2.0) / (s * s);
      d2(2, 2) = a * e * z * z * (z * z - 3.0) / (s * s);
      H.noalias() += (n[i] / (mu * mu)) * (J * J.transpose()) - (n[i] / mu - 1.0) * d2;
    }
  }
};

}  // namespace detail

/// Poisson maximum-likelihood fit of amplitude·exp(−(t−c)²/2σ²) + background.
///
/// The starting point comes from a rebinned argmax and the half-maximum span;
/// the fit uses bins within ±window_sigmas·σ of the current estimate.
inline GaussianFitResult fit_gaussian(const CoincidenceHistogram& h, const FitOptions& opt = {}) {
  const std::size_t nb = h.bins.size();
  if (nb < 8) fail(ErrorCategory::fit, "histogram too short to fit");
  std::vector<double> counts(h.bins.begin(), h.bins.end());

  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };

  // Rebin until the tallest rebinned bin stands well clear of the background
  // noise; the background level is the rebinned median.
  std::size_t r = 1;
  std::vector<double> reb;
  std::size_t peak = 0;
  double bg0 = 0.0;
  bool clear = false;
  for (;;) {
    reb.assign(nb / r, 0.0);
    for (std::size_t i = 0; i < reb.size() * r; ++i) reb[i / r] += counts[i];
    peak = static_cast<std::size_t>(std::max_element(reb.begin(), reb.end()) - reb.begin());
    double bgr = median(reb);
    bg0 = bgr / static_cast<double>(r);
    clear = reb[peak] - bgr >= 10.0 * std::sqrt(bgr + 1.0);
    if ((clear && reb[peak] - bgr >= 50.0) || r * 32 > nb) break;
    r *= 2;
  }
  if (!clear) fail(ErrorCategory::fit, "fit rejected: no coincidence peak stands above the background");
  const double rb = bg0 * static_cast<double>(r);
  double height = reb[peak] - rb;
  std::size_t l = peak, rr = peak;
  while (l > 0 && reb[l] - rb > 0.5 * height) --l;
  while (rr + 1 < reb.size() && reb[rr] - rb > 0.5 * height) ++rr;
  double span = std::max<double>(static_cast<double>(rr - l) - 1.0, 1.0) * static_cast<double>(r) * h.bin_width;
  double sigma0 = std::max(span / kFwhmPerSigma, 0.5 * h.bin_width);
  double center0 = h.center(std::min(nb - 1, peak * r + r / 2));
  double amp0 = height / static_cast<double>(r);

  // Refine the width with background-subtracted moments inside ±3σ
  // (a Gaussian truncated there has 0.9733 of its full standard deviation).
  for (int it = 0; it < 30; ++it) {
    double w0 = 0.0, w1 = 0.0, w2 = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
      double x = h.center(i) - center0;
      if (std::abs(x) > 3.0 * sigma0) continue;
      double c = counts[i] - bg0;
      w0 += c;
      w1 += c * x;
      w2 += c * x * x;
    }
    if (!(w0 > 0.0)) break;
    double m = w1 / w0, var = w2 / w0 - m * m;
    if (!(var > 0.0)) break;
    double next = std::max(std::sqrt(var) / 0.9733, 0.5 * h.bin_width);
    center0 += m;
    bool settled = std::abs(next - sigma0) < 1e-3 * sigma0 && std::abs(m) < 1e-3 * sigma0;
    sigma0 = next;
    if (settled) break;
  }

  // Acceptance of the peak before any fitting.
  double in_span = 0.0, bg_span = 0.0;
  for (std::size_t i = l * r; i < std::min(nb, (rr + 1) * r); ++i) {
    in_span += counts[i];
    bg_span += bg0;
  }
  double significance = (in_span - bg_span) / std::sqrt(bg_span + 1.0);
  if (!(amp0 > opt.min_peak_to_background * std::max(bg0, 1.0 / static_cast<double>(r))) ||
      significance < opt.min_significance)
    fail(ErrorCategory::fit, "fit rejected: no coincidence peak above background (peak-to-background <= 3)");

  Eigen::Vector4d p(std::max(amp0, 1e-3), center0, sigma0, bg0);
  GaussianFitResult res;
  Eigen::Matrix4d I;
  Eigen::Vector4d g;
  std::vector<double> xs, ns;
  bool converged = false;
  int total_iter = 0;
  for (int pass = 0; pass < 3; ++pass) {
    xs.clear();
    ns.clear();
    for (std::size_t i = 0; i < nb; ++i) {
      double x = h.center(i);
      if (std::abs(x - p[1]) <= opt.window_sigmas * p[2]) {
        xs.push_back(x);
        ns.push_back(counts[i]);
      }
    }
    if (xs.size() < 6) fail(ErrorCategory::fit, "too few bins inside the fit window");
    detail::PoissonGaussFit model{xs, ns};
    double lambda = 1e-3;
    double ll = model.loglik(p);
    converged = false;
    for (int it = 0; it < opt.max_iterations; ++it, ++total_iter) {
      model.fisher(p, I, g);
      Eigen::Matrix4d H;
      model.observed(p, H);
      // Newton on the observed information where it is positive definite, scoring otherwise.
      Eigen::Matrix4d A = Eigen::LLT<Eigen::Matrix4d>(H).info() == Eigen::Success ? H : I;
      for (int k = 0; k < 4; ++k) A(k, k) *= 1.0 + lambda;
      Eigen::Vector4d step = A.ldlt().solve(g);
      if (p[3] + step[3] < 0.0) {
        // Keep the background positive: move it part of the way to zero and
        // solve for the other three with that step held fixed.
        step[3] = -0.9 * p[3];
        Eigen::Vector3d rhs = g.head<3>() - A.block<3, 1>(0, 3) * step[3];
        step.head<3>() = A.topLeftCorner<3, 3>().ldlt().solve(rhs);
      }
      Eigen::Vector4d q = p + step;
      q[2] = std::abs(q[2]);
      q[3] = std::max(q[3], 0.0);
      double llq = model.loglik(q);
      if (std::isfinite(llq) && llq >= ll) {
        // Converged once the predicted log-likelihood gain (Newton decrement) is negligible
        // on the statistical scale, or the step is negligible on the parameter scale.
        bool small = step.dot(g) < 1e-9 ||
                     (std::abs(step[1]) < 1e-7 * p[2] && std::abs(step[2]) < 1e-7 * p[2] &&
                      std::abs(llq - ll) < 1e-10 * (1.0 + std::abs(ll)));
        p = q;
        ll = llq;
        lambda = std::max(lambda / 3.0, 1e-9);
        if (small) {
          converged = true;
          break;
        }
      } else {
        lambda *= 4.0;
        if (lambda > 1e12) {
          converged = std::abs(step[1]) < 1e-4 * p[2];
          break;
        }
      }
    }
  }
  if (!converged) {
    double rn = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double z = (xs[i] - p[1]) / p[2];
      double mu = p[0] * std::exp(-0.5 * z * z) + p[3];
      rn += (ns[i] - mu) * (ns[i] - mu);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "Gaussian fit did not converge (residual norm %.4g)", std::sqrt(rn));
    fail(ErrorCategory::fit, buf);
  }
  const double lo = h.center(0), hi = h.center(nb - 1);
  if (p[1] - 2.0 * p[2] < lo || p[1] + 2.0 * p[2] > hi)
    fail(ErrorCategory::fit, "peak not captured: fitted peak lies at the histogram window edge");
  if (!(p[0] > 0.0) || !(p[2] > 0.0)) fail(ErrorCategory::fit, "fit produced a non-positive amplitude or width");

  detail::PoissonGaussFit model{xs, ns};
  model.fisher(p, I, g);
  Eigen::Matrix4d cov = I.inverse();
  res.amplitude = p[0];
  res.center = p[1];
  res.sigma = p[2];
  res.background = p[3];
  res.amplitude_stderr = std::sqrt(std::max(cov(0, 0), 0.0));
  res.center_stderr = std::sqrt(std::max(cov(1, 1), 0.0));
  res.sigma_stderr = std::sqrt(std::max(cov(2, 2), 0.0));
  res.background_stderr = std::sqrt(std::max(cov(3, 3), 0.0));
  res.peak_counts = p[0] * p[2] * std::sqrt(2.0 * std::numbers::pi) / h.bin_width;
  res.iterations = total_iter;
  if (!(res.center_stderr > 0.0) || !(res.sigma_stderr > 0.0))
    fail(ErrorCategory::fit, "fit covariance is singular");
  return res;
}

struct OffsetEstimate {
  double offset = 0.0;
  double uncertainty = 0.0;
};

inline OffsetEstimate estimate_offset(const GaussianFitResult& fit, double calibration_center,
                                      double calibration_stderr = 0.0) {
  return {fit.center - calibration_center, std::hypot(fit.center_stderr, calibration_stderr)};
}

// ---- text interchange -------------------------------------------------------

inline void write_timestamps_csv(const std::vector<const TimestampStream*>& streams, const std::string& path,
                                 const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path);
  if (!header_comment.empty()) out << header_comment << "\n";
  char buf[96];
  for (const auto* s : streams) {
    std::snprintf(buf, sizeof buf, "# origin_s %s = %.17g\n", s->detector_id.c_str(), s->origin);
    out << buf;
  }
  out << "detector_id,time_ps\n";
  for (const auto* s : streams)
    for (double t : s->times) {
      std::snprintf(buf, sizeof buf, "%.17g", t * 1e12);
      out << s->detector_id << ',' << buf << '\n';
    }
}

/// Reads (detector_id, time_ps) rows, grouping by detector id in order of appearance.
inline std::vector<TimestampStream> read_timestamps_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path);
  std::vector<TimestampStream> out;
  std::vector<std::pair<std::string, double>> origins;
  auto stream_for = [&](const std::string& id) -> TimestampStream& {
    for (auto& s : out)
      if (s.detector_id == id) return s;
    out.push_back(TimestampStream{id, 0.0, {}});
    for (auto& o : origins)
      if (o.first == id) out.back().origin = o.second;
    return out.back();
  };
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      char id[64];
      double o;
      if (std::sscanf(line.c_str(), "# origin_s %63s = %lf", id, &o) == 2) origins.emplace_back(id, o);
      continue;
    }
    if (!header) {
      if (line != "detector_id,time_ps")
        fail(ErrorCategory::parse, path + ": line " + std::to_string(line_no) + ": expected header detector_id,time_ps");
      header = true;
      continue;
    }
    auto comma = line.find(',');
    if (comma == std::string::npos)
      fail(ErrorCategory::parse, path + ": line " + std::to_string(line_no) + ": expected two columns");
    std::string id = line.substr(0, comma);
    char* end = nullptr;
    std::string val = line.substr(comma + 1);
    double t = std::strtod(val.c_str(), &end);
    if (end == val.c_str() || *end != '\0' || !std::isfinite(t))
      fail(ErrorCategory::parse, path + ": line " + std::to_string(line_no) + ": bad time value");
    stream_for(id).times.push_back(t * 1e-12);
  }
  for (auto& s : out)
    if (!s.strictly_increasing()) fail(ErrorCategory::validation, path + ": stream '" + s.detector_id + "' is not strictly increasing");
  return out;
}

inline void write_histogram_csv(const CoincidenceHistogram& h, const std::string& path,
                                const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path);
  if (!header_comment.empty()) out << header_comment << "\n";
  out << "bin_center_ps,counts\n";
  char buf[64];
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.11e", h.center(i) * 1e12);
    out << buf << ',' << h.bins[i] << '\n';
  }
}

inline std::string fit_report(const GaussianFitResult& f) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "center_ps = %.11e\ncenter_stderr_ps = %.11e\nsigma_ps = %.11e\nsigma_stderr_ps = %.11e\n"
                "fwhm_ps = %.11e\namplitude_counts = %.11e\nbackground_counts_per_bin = %.11e\n"
                "peak_counts = %.11e\niterations = %d\n",
                f.center * 1e12, f.center_stderr * 1e12, f.sigma * 1e12, f.sigma_stderr * 1e12,
                f.sigma * kFwhmPerSigma * 1e12, f.amplitude, f.background, f.peak_counts, f.iterations);
  return buf;
}

}  // namespace qsync
