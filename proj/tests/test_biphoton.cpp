#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qsync/biphoton.hpp"
#include "qsync/hom.hpp"

using namespace qsync;

namespace {
PhotonPairSource degenerate() {
  PhotonPairSource s;
  s.signal_nm = s.idler_nm = 1574.55;
  s.pump_nm = 1574.55 / 2;
  s.spectral_tilt = 0.0;
  return s;
}
}  // namespace

TEST(Source, Validation) {
  PhotonPairSource s;
  EXPECT_NO_THROW(s.validate());
  s.pump_nm = 780;
  EXPECT_THROW(s.validate(), Error);
  s = PhotonPairSource{};
  s.distinguishability = 1.2;
  s.pair_rate = -1;
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    std::string w = e.what();
    EXPECT_NE(w.find("distinguishability"), std::string::npos);
    EXPECT_NE(w.find("pair_rate"), std::string::npos);
  }
}

TEST(Source, SumBandwidthFromPump) {
  // Δω = 2πcΔλ/λ², converted from FWHM to standard deviation.
  double expect = 2 * std::numbers::pi * 299792458.0 * 25e-9 / (787e-9 * 787e-9) / 2.3548200450309493;
  EXPECT_NEAR(sum_bandwidth_from_pump(787, 25) / expect, 1.0, 1e-12);
  EXPECT_NEAR(PhotonPairSource{}.sum_bandwidth / expect, 1.0, 1e-9);
}

TEST(GaussianJsa, Normalized) {
  auto f = gaussian_jsa(PhotonPairSource{}, 256);
  EXPECT_NEAR(f.norm(), 1.0, 1e-6);
  double s = 0;
  for (auto a : f.amplitude) s += std::norm(a);
  EXPECT_NEAR(s * 0.5 * f.dv() * f.du(), 1.0, 1e-6);
}

TEST(GaussianJsa, ExchangeSymmetryWhenDegenerate) {
  auto f = gaussian_jsa(degenerate(), 128);
  for (std::size_t iv = 0; iv < f.nv(); ++iv)
    for (std::size_t iu = 0; iu < f.nu(); ++iu) ASSERT_EQ(f.at(iv, iu), f.at(iv, f.nu() - 1 - iu));
}

TEST(GaussianJsa, GridSpansSixSigma) {
  PhotonPairSource s;
  auto f = gaussian_jsa(s, 128);
  EXPECT_GE(f.v.back(), 6 * s.sum_bandwidth * (1 - 1e-12));
  EXPECT_GE(f.u.back(), 6 * s.difference_marginal_sigma() + std::abs(s.center_difference()) - 1.0);
  EXPECT_NEAR(f.u.front(), -f.u.back(), 1e-3);
  EXPECT_THROW(gaussian_jsa(s, 32), Error);
  JsaGrid g;
  g.sum_span_sigmas = 4;
  EXPECT_THROW(gaussian_jsa(s, g), Error);
}

TEST(GaussianJsa, CalibratedDipWidth) {
  auto f = gaussian_jsa(PhotonPairSource{}, 512);
  auto m = dip_metrics(hom_profile(f, delay_grid(10e-12, 801), 1.0));
  EXPECT_NEAR(m.width_fwhm, 3.25e-12, 3.25e-12 * 0.02);
}

TEST(GaussianJsa, MarginalWidthClosedForm) {
  for (double kappa : {0.0, 0.02, 0.3}) {
    PhotonPairSource s;
    s.spectral_tilt = kappa;
    s.difference_bandwidth = 0.3 * s.sum_bandwidth;  // resolvable on both axes
    auto f = gaussian_jsa(s, 512);
    // Signal detuning Ω_s = (v + u)/2; its offset mean is u0/2.
    double m1 = 0, m2 = 0, w = 0;
    for (std::size_t iv = 0; iv < f.nv(); ++iv)
      for (std::size_t iu = 0; iu < f.nu(); ++iu) {
        double p = std::norm(f.at(iv, iu));
        double ws = 0.5 * (f.v[iv] + f.u[iu]);
        m1 += p * ws;
        m2 += p * ws * ws;
        w += p;
      }
    double sd = std::sqrt(m2 / w - (m1 / w) * (m1 / w));
    double closed = std::sqrt((std::pow(1 + kappa, 2) * s.sum_bandwidth * s.sum_bandwidth +
                               s.difference_bandwidth * s.difference_bandwidth) / 4.0);
    EXPECT_NEAR(sd / closed, 1.0, 0.005) << kappa;
    EXPECT_NEAR(m1 / w, 0.5 * s.center_difference(), 1e-3 * closed);
  }
}

TEST(GaussianJsa, HalvingGridChangesDipLittle) {
  PhotonPairSource s;
  auto d = delay_grid(10e-12, 801);
  auto a = dip_metrics(hom_profile(gaussian_jsa(s, 512), d, s.distinguishability));
  auto b = dip_metrics(hom_profile(gaussian_jsa(s, 256), d, s.distinguishability));
  EXPECT_LT(std::abs(a.width_fwhm / b.width_fwhm - 1), 0.005);
  EXPECT_LT(std::abs(a.visibility / b.visibility - 1), 0.005);
}

TEST(ApplyDispersion, IdentityModulusInverse) {
  auto f = gaussian_jsa(PhotonPairSource{}, 128);
  auto z = apply_dispersion(f, QuadraticPhase{}, QuadraticPhase{});
  for (std::size_t k = 0; k < f.amplitude.size(); ++k) ASSERT_EQ(z.amplitude[k], f.amplitude[k]);

  QuadraticPhase ps{2e-11, -1.1e-22}, pi{-3e-11, 4e-23};
  auto g = apply_dispersion(f, ps, pi);
  for (std::size_t k = 0; k < f.amplitude.size(); ++k)
    ASSERT_NEAR(std::abs(g.amplitude[k]), std::abs(f.amplitude[k]), 1e-12 * std::abs(f.amplitude[k]) + 1e-300);
  EXPECT_NEAR(g.norm(), f.norm(), 1e-12);
  auto back = apply_dispersion(g, -ps, -pi);
  double worst = 0, peak = 0;
  for (std::size_t k = 0; k < f.amplitude.size(); ++k) {
    worst = std::max(worst, std::abs(back.amplitude[k] - f.amplitude[k]));
    peak = std::max(peak, std::abs(f.amplitude[k]));
  }
  EXPECT_LT(worst, 1e-12 * peak);
}

TEST(ApplyDispersion, NonFinitePhaseReportsGridPoint) {
  auto f = gaussian_jsa(PhotonPairSource{}, 64);
  try {
    apply_dispersion(f, PhaseFunction([](double w) { return w > 0 ? std::nan("") : 0.0; }),
                     PhaseFunction([](double) { return 0.0; }));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::numeric);
    EXPECT_NE(std::string(e.what()).find("iv="), std::string::npos);
  }
}

TEST(ApplyDispersion, TracksPhaseStep) {
  auto f = gaussian_jsa(PhotonPairSource{}, 128);
  QuadraticPhase q{0, -1e-22};
  auto g = apply_dispersion(f, q, q);
  // Equal quadratics: φ = b(v² + u²)/2, largest step at the u edge.
  double du = f.du();
  double expect = std::abs(q.quadratic) * 0.5 * (std::pow(f.u.back(), 2) - std::pow(f.u.back() - du, 2));
  EXPECT_NEAR(g.max_phase_step_u, expect, 1e-6 * expect);
}

TEST(FiberPhase, ZeroLengthIsZero) {
  auto p = fiber_phase(FiberLink::none(), 1574.4, 22);
  EXPECT_EQ(p(1e12), 0.0);
  EXPECT_EQ(p(-3e12), 0.0);
}

TEST(FiberPhase, Additive) {
  auto a = fiber_phase(FiberLink::spans({5000, 5000}), 1574.4, 22);
  auto b = fiber_phase(FiberLink::spans({10000}), 1574.4, 22);
  for (double w : {-2e12, -1e11, 3e10, 1.5e12}) EXPECT_NEAR(a(w), b(w), 1e-12 * std::abs(b(w)));
}

TEST(FiberPhase, QuadraticCoefficient) {
  auto p = fiber_phase(FiberLink::spans({10000}), 1574.4, 22);
  EXPECT_LT(p.quadratic, -0.95e-22);
  EXPECT_GT(p.quadratic, -1.2e-22);
  EXPECT_NEAR(p.quadratic, 0.5 * gvd_coefficient(DispersionModel::standard_smf(), 1574.4, 22) * 1e4, 1e-36);
  EXPECT_NEAR(p.linear, group_delay_coefficient(DispersionModel::standard_smf(), 1574.4, 22) * 1e4, 1e-18);
}

TEST(GridForDispersion, KeepsPhaseStepUnderHalfPi) {
  PhotonPairSource s;
  for (double L : {200.0, 10000.0, 20000.0}) {
    auto ph = fiber_phase(FiberLink::spans({L}), s.mean_nm(), 22);
    auto g = grid_for_dispersion(s, ph, ph);
    auto f = apply_dispersion(gaussian_jsa(s, g), ph, ph);
    EXPECT_LE(f.max_phase_step_u, std::numbers::pi / 4 + 1e-12) << L;
  }
}

TEST(JsaCsv, Export) {
  auto f = gaussian_jsa(PhotonPairSource{}, 64);
  auto path = std::filesystem::temp_directory_path() / "qsync_jsa_test.csv";
  write_jsa_csv(f, path.string());
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("sum_detuning_rad_s", 0), 0u);
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 64 * 64);
  std::filesystem::remove(path);
}
