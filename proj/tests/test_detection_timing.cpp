#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "qsync/calibration.hpp"
#include "qsync/detection_timing.hpp"

using namespace qsync;

namespace {

DetectorModel ideal() { return DetectorModel{1.0, 0.0, 0.0}; }

// Histogram filled directly from a Gaussian, bypassing the timestamp path.
CoincidenceHistogram synthetic(std::size_t n, double center, double sigma, double bg_per_bin, std::uint64_t seed,
                               double bin = 4e-12, double window = 5e-9) {
  CoincidenceHistogram h;
  h.bin_width = bin;
  h.window = window;
  long K = std::lround(window / bin);
  h.bins.assign(2 * K + 1, 0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(center, sigma);
  for (std::size_t i = 0; i < n; ++i) {
    long k = std::lround(g(rng) / bin);
    if (k >= -K && k <= K) ++h.bins[k + K];
  }
  if (bg_per_bin > 0) {
    std::poisson_distribution<std::uint64_t> p(bg_per_bin);
    for (auto& b : h.bins) b += p(rng);
  }
  h.total_coincidences = std::accumulate(h.bins.begin(), h.bins.end(), std::uint64_t{0});
  return h;
}

double fwhm_direct(const JointSpectralAmplitude& f, double tmax, int points) {
  // Direct (non-FFT) transform along u at each T; T is conjugate to u/2.
  std::vector<double> p(points);
  for (int k = 0; k < points; ++k) {
    double T = -tmax + 2 * tmax * k / (points - 1);
    double acc = 0;
    for (std::size_t iv = 0; iv < f.nv(); ++iv) {
      cdouble s = 0;
      for (std::size_t iu = 0; iu < f.nu(); ++iu) s += f.at(iv, iu) * std::polar(1.0, -0.5 * f.u[iu] * T);
      acc += std::norm(s);
    }
    p[k] = acc;
  }
  ArrivalDensity d;
  d.t0 = -tmax;
  d.dt = 2 * tmax / (points - 1);
  d.pdf = p;
  return d.fwhm();
}

}  // namespace

TEST(ArrivalDensity, BackToBackWidth) {
  auto d = equal_arm_density(PhotonPairSource{}, 0.0, kCalibratedTotalJitter);
  EXPECT_NEAR(d.fwhm(), 62e-12, 62e-12 * 0.02);
  double integral = std::accumulate(d.pdf.begin(), d.pdf.end(), 0.0) * d.dt;
  EXPECT_NEAR(integral, 1.0, 1e-12);
}

TEST(ArrivalDensity, TenKilometreWidth) {
  auto d = equal_arm_density(PhotonPairSource{}, 10000.0, kCalibratedTotalJitter);
  EXPECT_NEAR(d.fwhm(), 514.8e-12, 514.8e-12 * 0.15);
  // The centroid sits at −τ_group: the signal (shorter wavelength) arrives first.
  auto link = FiberLink::spans({10000});
  double tau = path_delay_difference(link, link, PhotonPairSource{}, 22).group_delay;
  EXPECT_NEAR(d.mean(), -tau, 0.2e-12);
}

TEST(ArrivalDensity, IntrinsicWidthMatchesDirectTransform) {
  PhotonPairSource s;
  JsaGrid g;
  g.n_sum = 96;
  g.n_difference = 256;
  auto f = gaussian_jsa(s, g);
  auto d = arrival_difference_density(f, ideal(), ideal(), 0.0, 16);
  double oracle = fwhm_direct(f, 6e-12, 1201);
  EXPECT_NEAR(d.fwhm() / oracle, 1.0, 0.01);
  // Gaussian closed form: std(T) = 1/σ₋.
  EXPECT_NEAR(d.stddev() * s.difference_bandwidth, 1.0, 0.01);
}

TEST(ArrivalDensity, WidthComposition) {
  PhotonPairSource s;
  auto intrinsic = equal_arm_density(s, 10000.0, 0.0);
  DetectorModel da{1, 15e-12, 0}, db{1, 20e-12, 0};
  auto f = apply_dispersion(gaussian_jsa(s, grid_for_dispersion(s, fiber_phase(FiberLink::spans({10000}), s.mean_nm(), 22),
                                                                fiber_phase(FiberLink::spans({10000}), s.mean_nm(), 22))),
                            fiber_phase(FiberLink::spans({10000}), s.mean_nm(), 22),
                            fiber_phase(FiberLink::spans({10000}), s.mean_nm(), 22));
  auto total = arrival_difference_density(f, da, db, 10e-12);
  double expect = std::pow(intrinsic.stddev(), 2) + 15e-12 * 15e-12 + 20e-12 * 20e-12 + 10e-12 * 10e-12;
  EXPECT_NEAR(std::pow(total.stddev(), 2) / expect, 1.0, 0.01);
}

TEST(ArrivalDensity, NyquistCheck) {
  PhotonPairSource s;
  auto ph = fiber_phase(FiberLink::spans({10000}), s.mean_nm(), 22);
  auto f = apply_dispersion(gaussian_jsa(s, 512), ph, ph);
  try {
    arrival_difference_density(f, ideal(), ideal(), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::resolution);
  }
}

TEST(SimulateTimestamps, PoissonCounts) {
  auto d = equal_arm_density(PhotonPairSource{}, 0.0, kCalibratedTotalJitter);
  auto [a, b] = simulate_timestamps(1000, d, {}, {}, ideal(), ideal(), 10.0, 5);
  EXPECT_NEAR(static_cast<double>(a.times.size()), 1e4, 300);
  EXPECT_NEAR(static_cast<double>(b.times.size()), 1e4, 300);
  EXPECT_TRUE(a.strictly_increasing());
  EXPECT_TRUE(b.strictly_increasing());
}

TEST(SimulateTimestamps, Deterministic) {
  auto d = equal_arm_density(PhotonPairSource{}, 0.0, kCalibratedTotalJitter);
  DetectorModel det{0.3, 0.0, 100};
  ClockModel ca{1e-9, 1e-12, 2e-12}, cb{};
  auto r1 = simulate_timestamps(5e4, d, ca, cb, det, det, 2.0, 99);
  auto r2 = simulate_timestamps(5e4, d, ca, cb, det, det, 2.0, 99);
  EXPECT_EQ(r1.first.times, r2.first.times);
  EXPECT_EQ(r1.second.times, r2.second.times);
  auto r3 = simulate_timestamps(5e4, d, ca, cb, det, det, 2.0, 100);
  EXPECT_NE(r1.first.times, r3.first.times);
}

TEST(SimulateTimestamps, RateCap) {
  auto d = equal_arm_density(PhotonPairSource{}, 0.0, kCalibratedTotalJitter);
  SimulationOptions o;
  o.max_events = 1e5;
  try {
    simulate_timestamps(1e6, d, {}, {}, ideal(), ideal(), 1.0, 1, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::resource);
  }
}

TEST(SimulateTimestamps, ClockOffsetRoundTrip) {
  auto d = equal_arm_density(PhotonPairSource{}, 0.0, kCalibratedTotalJitter);
  DetectorModel det{0.5, 0.0, 0.0};
  auto [a0, b0] = simulate_timestamps(2e4, d, {}, {}, det, det, 20.0, 11);
  auto cal = fit_gaussian(coincidence_histogram(a0, b0, 4e-12, 5e-9));
  ClockModel ca{50e-12, 0, 0};
  auto [a1, b1] = simulate_timestamps(2e4, d, ca, {}, det, det, 20.0, 12);
  auto fit = fit_gaussian(coincidence_histogram(a1, b1, 4e-12, 5e-9));
  auto est = estimate_offset(fit, cal.center, cal.center_stderr);
  EXPECT_NEAR(est.offset, 50e-12, 3 * est.uncertainty);
  // Another 40 ps (ten bins) on the clock adds linearly.
  ClockModel cc{90e-12, 0, 0};
  auto [a2, b2] = simulate_timestamps(2e4, d, cc, {}, det, det, 20.0, 12);
  auto est2 = estimate_offset(fit_gaussian(coincidence_histogram(a2, b2, 4e-12, 5e-9)), cal.center);
  EXPECT_NEAR(est2.offset - est.offset, 40e-12, 1e-15);
}

TEST(CoincidenceHistogram, IdenticalStreams) {
  TimestampStream a{"a", 0, {1e-6, 2e-6, 3.5e-6, 9e-6}};
  auto h = coincidence_histogram(a, a, 4e-12, 1e-9);
  EXPECT_EQ(h.total_coincidences, 4u);
  EXPECT_EQ(h.bins[h.bins.size() / 2], 4u);
  EXPECT_EQ(std::accumulate(h.bins.begin(), h.bins.end(), std::uint64_t{0}), h.total_coincidences);
}

TEST(CoincidenceHistogram, ShiftedCopy) {
  TimestampStream a{"a", 0, {1e-6, 2e-6, 3.5e-6, 9e-6}}, b = a;
  for (auto& t : b.times) t += 100e-12;
  auto h = coincidence_histogram(a, b, 4e-12, 1e-9);
  std::size_t k = std::max_element(h.bins.begin(), h.bins.end()) - h.bins.begin();
  EXPECT_NEAR(h.center(k), -100e-12, 2e-12);
  // Origin offsets are honoured.
  TimestampStream c = a;
  c.origin = 100e-12;
  auto h2 = coincidence_histogram(a, c, 4e-12, 1e-9);
  EXPECT_EQ(h2.bins, h.bins);
}

TEST(CoincidenceHistogram, AccidentalFloor) {
  std::mt19937_64 rng(3);
  TimestampStream a{"a", 0, {}}, b{"b", 0, {}};
  detail::poisson_times(2e4, 50.0, rng, a.times);
  detail::poisson_times(3e4, 50.0, rng, b.times);
  auto h = coincidence_histogram(a, b, 100e-12, 10e-9);
  double expect = 2e4 * 3e4 * 100e-12 * 50.0;  // per bin
  double mean = static_cast<double>(h.total_coincidences) / h.bins.size();
  EXPECT_NEAR(mean, expect, 3 * std::sqrt(expect / h.bins.size()));
  int outliers = 0;
  for (auto c : h.bins) outliers += std::abs(c - expect) > 4 * std::sqrt(expect);
  EXPECT_LE(outliers, 1);
}

TEST(CoincidenceHistogram, RejectsUnsorted) {
  TimestampStream a{"a", 0, {2e-6, 1e-6}}, b{"b", 0, {1e-6}};
  EXPECT_THROW(coincidence_histogram(a, b, 4e-12, 1e-9), Error);
  EXPECT_THROW(coincidence_histogram(b, b, 0.0, 1e-9), Error);
}

TEST(FitGaussian, RecoversSyntheticCenter) {
  auto h = synthetic(100000, 37e-12, 500e-12, 0.5, 17);
  auto f = fit_gaussian(h);
  EXPECT_NEAR(f.center, 37e-12, 3 * 500e-12 / std::sqrt(1e5));
  EXPECT_NEAR(f.sigma, 500e-12, 5e-12);
  EXPECT_NEAR(f.center_stderr, 500e-12 / std::sqrt(1e5), 0.1 * 500e-12 / std::sqrt(1e5));
}

TEST(FitGaussian, BackgroundOnlyRejected) {
  for (double bg : {0.02, 1.0, 50.0}) {
    auto h = synthetic(0, 0, 1, bg, 5);
    EXPECT_THROW(fit_gaussian(h), Error) << bg;
  }
}

TEST(FitGaussian, PeakAtEdgeNotCaptured) {
  auto h = synthetic(20000, 4.9e-9, 200e-12, 0.0, 5);
  try {
    fit_gaussian(h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::fit);
  }
}

TEST(FitGaussian, StderrScalesAsInverseRootN) {
  std::vector<double> lx, ly;
  for (double n : {3e3, 1e4, 3e4}) {
    double acc = 0;
    for (int r = 0; r < 20; ++r) acc += fit_gaussian(synthetic(static_cast<std::size_t>(n), 0, 218e-12, 0.01, 100 + r)).center_stderr;
    lx.push_back(std::log(n));
    ly.push_back(std::log(acc / 20));
  }
  double mx = (lx[0] + lx[1] + lx[2]) / 3, my = (ly[0] + ly[1] + ly[2]) / 3, sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  EXPECT_NEAR(sxy / sxx, -0.5, 0.05);
}

TEST(FitGaussian, PaperScaleEpoch) {
  // PicoHarp preset: 272.5 coincidences/s over 100 s through 10 km per arm.
  PhotonPairSource s;
  auto d = equal_arm_density(s, 10000.0, kCalibratedTotalJitter);
  const double eta = std::sqrt(272.54 / 4e6);
  DetectorModel det{eta, 0.0, 100.0};
  auto [a, b] = simulate_timestamps(4e6, d, {}, {}, det, det, 100.0, 2024);
  auto h = coincidence_histogram(a, b, 4e-12, 5e-9);
  auto f = fit_gaussian(h);
  EXPECT_NEAR(f.sigma * kFwhmPerSigma, 514.8e-12, 514.8e-12 * 0.15);
  // Statistical floor σ/√N; the measured ±7.2 ps bounds it from above.
  double floor = f.sigma / std::sqrt(f.peak_counts);
  EXPECT_NEAR(f.center_stderr / floor, 1.0, 0.15);
  EXPECT_LT(f.center_stderr, 7.2e-12);
  EXPECT_NEAR(f.center, d.mean(), 4 * f.center_stderr);
}

TEST(EstimateOffset, Basics) {
  GaussianFitResult f;
  f.center = 12e-12;
  f.center_stderr = 3e-12;
  auto e = estimate_offset(f, 12e-12);
  EXPECT_EQ(e.offset, 0.0);
  EXPECT_EQ(e.uncertainty, 3e-12);
  auto e2 = estimate_offset(f, 2e-12, 4e-12);
  EXPECT_NEAR(e2.offset, 10e-12, 1e-24);
  EXPECT_NEAR(e2.uncertainty, 5e-12, 1e-24);
}

TEST(Csv, TimestampRoundTrip) {
  TimestampStream a{"D3", 120.0, {1e-6, 2.5e-6, 7.123456789e-3}}, b{"D4", 120.0, {3e-6}};
  auto path = (std::filesystem::temp_directory_path() / "qsync_ts.csv").string();
  write_timestamps_csv({&a, &b}, path);
  auto back = read_timestamps_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].detector_id, "D3");
  EXPECT_EQ(back[0].origin, 120.0);
  ASSERT_EQ(back[0].times.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(back[0].times[i], a.times[i]);
  std::filesystem::remove(path);
}

TEST(Csv, HistogramAndReport) {
  auto h = synthetic(1000, 0, 100e-12, 0, 1, 4e-12, 1e-9);
  auto path = (std::filesystem::temp_directory_path() / "qsync_hist.csv").string();
  write_histogram_csv(h, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "bin_center_ps,counts");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(h.bins.size()));
  std::filesystem::remove(path);
  EXPECT_NE(fit_report(fit_gaussian(h)).find("center_ps"), std::string::npos);
}
