#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qsync/error.hpp"
#include "qsync/keyvalue.hpp"
#include "qsync/source.hpp"

namespace qsync {

/// One resonance of the Sellmeier sum. Coefficients are given at the model's
/// reference temperature; amplitude and squared resonance vary linearly in T.
struct SellmeierTerm {
  double amplitude = 0.0;
  double resonance_um = 0.0;
  double amplitude_per_c = 0.0;
  double resonance_sq_um2_per_c = 0.0;
  bool operator==(const SellmeierTerm&) const = default;
};

struct ValidityRange {
  double lambda_min_nm = 1200.0;
  double lambda_max_nm = 1700.0;
  double temperature_min_c = 0.0;
  double temperature_max_c = 50.0;
  bool operator==(const ValidityRange&) const = default;
};

/// n(ω) and its first two ω-derivatives.
struct IndexDerivatives {
  double n = 0.0;
  double dn = 0.0;   // dn/dω, s/rad
  double d2n = 0.0;  // d²n/dω², s²/rad²
};

/// Temperature-dependent Sellmeier model of the fiber's effective index:
/// n² = bg(T) + Σ a_k(T)·λ²/(λ² − r_k(T)²).
class DispersionModel {
 public:
  DispersionModel(std::string name, double background, double background_per_c,
                  std::vector<SellmeierTerm> terms, double reference_temperature_c,
                  ValidityRange validity = {}, int version = 1)
      : name_(std::move(name)),
        version_(version),
        background_(background),
        background_per_c_(background_per_c),
        terms_(std::move(terms)),
        reference_temperature_c_(reference_temperature_c),
        validity_(validity) {
    validate();
  }

  static DispersionModel parse(std::string_view text) {
    kv::Reader r(kv::parse(text));
    auto req_num = [&](const std::string& key) {
      auto v = r.number(key);
      if (!v && !r.has(key)) r.error(key + ": missing");
      return v.value_or(0.0);
    };
    std::string name = r.text("name").value_or("");
    if (name.empty() && !r.has("name")) r.error("name: missing");
    int version = static_cast<int>(r.integer("version").value_or(1));
    double tref = req_num("reference_temperature_c");
    ValidityRange vr;
    vr.lambda_min_nm = r.number("validity.lambda_min_nm").value_or(vr.lambda_min_nm);
    vr.lambda_max_nm = r.number("validity.lambda_max_nm").value_or(vr.lambda_max_nm);
    vr.temperature_min_c = r.number("validity.temperature_min_c").value_or(vr.temperature_min_c);
    vr.temperature_max_c = r.number("validity.temperature_max_c").value_or(vr.temperature_max_c);
    double bg = req_num("background");
    double bg_t = r.number("background_per_c").value_or(0.0);
    std::vector<SellmeierTerm> terms;
    for (int k = 0;; ++k) {
      std::string p = "term[" + std::to_string(k) + "].";
      if (r.keys_with_prefix(p).empty()) break;
      SellmeierTerm t;
      t.amplitude = req_num(p + "amplitude");
      t.resonance_um = req_num(p + "resonance_um");
      t.amplitude_per_c = r.number(p + "amplitude_per_c").value_or(0.0);
      t.resonance_sq_um2_per_c = r.number(p + "resonance_sq_um2_per_c").value_or(0.0);
      terms.push_back(t);
    }
    if (terms.empty()) r.error("term[0]: at least one Sellmeier term is required");
    r.reject_unknown();
    if (!r.errors().empty()) throw kv::ParseErrors(ErrorCategory::config, r.errors());
    return DispersionModel(name, bg, bg_t, std::move(terms), tref, vr, version);
  }

  static DispersionModel load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open dispersion file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Built-in copy of data/smf_effective.disp.
  static const DispersionModel& standard_smf();

  std::string serialize() const {
    using kv::format_exact;
    std::string out;
    auto line = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
    line("name", name_);
    line("version", std::to_string(version_));
    line("reference_temperature_c", format_exact(reference_temperature_c_));
    line("validity.lambda_min_nm", format_exact(validity_.lambda_min_nm));
    line("validity.lambda_max_nm", format_exact(validity_.lambda_max_nm));
    line("validity.temperature_min_c", format_exact(validity_.temperature_min_c));
    line("validity.temperature_max_c", format_exact(validity_.temperature_max_c));
    line("background", format_exact(background_));
    line("background_per_c", format_exact(background_per_c_));
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      std::string p = "term[" + std::to_string(k) + "].";
      line(p + "amplitude", format_exact(terms_[k].amplitude));
      line(p + "amplitude_per_c", format_exact(terms_[k].amplitude_per_c));
      line(p + "resonance_um", format_exact(terms_[k].resonance_um));
      line(p + "resonance_sq_um2_per_c", format_exact(terms_[k].resonance_sq_um2_per_c));
    }
    return out;
  }

  const std::string& name() const { return name_; }
  int version() const { return version_; }
  double reference_temperature_c() const { return reference_temperature_c_; }
  const ValidityRange& validity() const { return validity_; }
  const std::vector<SellmeierTerm>& terms() const { return terms_; }
  double background() const { return background_; }
  double background_per_c() const { return background_per_c_; }

  void check_domain(double lambda_nm, double temperature_c) const {
    if (!(lambda_nm >= validity_.lambda_min_nm && lambda_nm <= validity_.lambda_max_nm))
      fail(ErrorCategory::domain, "wavelength " + kv::format_exact(lambda_nm) + " nm outside [" +
                                      kv::format_exact(validity_.lambda_min_nm) + ", " +
                                      kv::format_exact(validity_.lambda_max_nm) + "] nm");
    if (!(temperature_c >= validity_.temperature_min_c && temperature_c <= validity_.temperature_max_c))
      fail(ErrorCategory::domain, "temperature " + kv::format_exact(temperature_c) + " C outside [" +
                                      kv::format_exact(validity_.temperature_min_c) + ", " +
                                      kv::format_exact(validity_.temperature_max_c) + "] C");
  }

  /// Unchecked evaluation of n and its ω-derivatives (closed form).
  IndexDerivatives derivatives(double omega, double temperature_c) const {
    constexpr double K = 2.0 * std::numbers::pi * kSpeedOfLight * 1e6;  // λ[µm] = K/ω
    const double dt = temperature_c - reference_temperature_c_;
    const double w2 = omega * omega;
    double N = background_ + background_per_c_ * dt, dN = 0.0, d2N = 0.0;
    for (const auto& t : terms_) {
      double a = t.amplitude + t.amplitude_per_c * dt;
      double q = (t.resonance_um * t.resonance_um + t.resonance_sq_um2_per_c * dt) / (K * K);
      double den = 1.0 - q * w2;
      N += a / den;
      dN += 2.0 * a * q * omega / (den * den);
      d2N += 2.0 * a * q * (1.0 + 3.0 * q * w2) / (den * den * den);
    }
    IndexDerivatives d;
    d.n = std::sqrt(N);
    d.dn = dN / (2.0 * d.n);
    d.d2n = (d2N - 2.0 * d.dn * d.dn) / (2.0 * d.n);
    return d;
  }

  bool operator==(const DispersionModel&) const = default;

 private:
  void validate() const {
    std::vector<std::string> bad;
    if (terms_.empty()) bad.push_back("at least one Sellmeier term is required");
    if (!(validity_.lambda_min_nm > 0 && validity_.lambda_max_nm > validity_.lambda_min_nm))
      bad.push_back("validity wavelength range is empty");
    if (!(validity_.temperature_max_c >= validity_.temperature_min_c))
      bad.push_back("validity temperature range is empty");
    if (bad.empty()) {
      // Sample the validity box: n must be finite, in (1, 2), and free of poles.
      for (int i = 0; i <= 20 && bad.empty(); ++i) {
        double lam = validity_.lambda_min_nm + (validity_.lambda_max_nm - validity_.lambda_min_nm) * i / 20.0;
        for (int j = 0; j <= 4; ++j) {
          double T = validity_.temperature_min_c +
                     (validity_.temperature_max_c - validity_.temperature_min_c) * j / 4.0;
          double n = derivatives(omega_from_nm(lam), T).n;
          if (!(n > 1.0 && n < 2.0)) {
            bad.push_back("refractive index leaves (1, 2) at " + kv::format_exact(lam) + " nm, " +
                          kv::format_exact(T) + " C");
            break;
          }
        }
      }
    }
    if (!bad.empty()) {
      std::string msg = "invalid dispersion model '" + name_ + "':";
      for (const auto& b : bad) msg += "\n  " + b;
      fail(ErrorCategory::validation, msg);
    }
  }

  std::string name_;
  int version_ = 1;
  double background_ = 0.0;
  double background_per_c_ = 0.0;
  std::vector<SellmeierTerm> terms_;
  double reference_temperature_c_ = 22.0;
  ValidityRange validity_;
};

inline constexpr std::string_view kStandardSmfText = R"(name = smf-effective-ghosh-form
version = 1
reference_temperature_c = 22
validity.lambda_min_nm = 1200
validity.lambda_max_nm = 1700
validity.temperature_min_c = 0
validity.temperature_max_c = 50
background = 1.2486477870368744
background_per_c = 6.90754e-06
term[0].amplitude = 0.8553063330675845
term[0].amplitude_per_c = 2.35835e-05
term[0].resonance_um = 0.10565472824019771
term[0].resonance_sq_um2_per_c = 5.84758e-07
term[1].amplitude = 2.9445873946006436
term[1].amplitude_per_c = 5.48368e-07
term[1].resonance_um = 18.21986474910363
term[1].resonance_sq_um2_per_c = 0
)";

inline const DispersionModel& DispersionModel::standard_smf() {
  static const DispersionModel model = parse(kStandardSmfText);
  return model;
}

inline double refractive_index(const DispersionModel& model, double lambda_nm, double temperature_c) {
  model.check_domain(lambda_nm, temperature_c);
  return model.derivatives(omega_from_nm(lambda_nm), temperature_c).n;
}

/// k′ = dk/dω = (n + ω·dn/dω)/c, in s/m.
inline double group_delay_coefficient(const DispersionModel& model, double lambda_nm, double temperature_c) {
  model.check_domain(lambda_nm, temperature_c);
  double w = omega_from_nm(lambda_nm);
  auto d = model.derivatives(w, temperature_c);
  return (d.n + w * d.dn) / kSpeedOfLight;
}

/// k″ = d²k/dω² = (2·dn/dω + ω·d²n/dω²)/c, in s²/m.
inline double gvd_coefficient(const DispersionModel& model, double lambda_nm, double temperature_c) {
  model.check_domain(lambda_nm, temperature_c);
  double w = omega_from_nm(lambda_nm);
  auto d = model.derivatives(w, temperature_c);
  return (2.0 * d.dn + w * d.d2n) / kSpeedOfLight;
}

/// D = −2πc·k″/λ², in ps/(nm·km).
inline double dispersion_parameter(const DispersionModel& model, double lambda_nm, double temperature_c) {
  double lam = lambda_nm * 1e-9;
  return -2.0 * std::numbers::pi * kSpeedOfLight * gvd_coefficient(model, lambda_nm, temperature_c) /
         (lam * lam) * 1e6;
}

struct FiberSegment {
  double length_m = 0.0;
  double excess_loss_db = 0.0;
  double attenuation_db_per_km = 0.2;
  double temperature_offset_c = 0.0;
  bool operator==(const FiberSegment&) const = default;
};

class FiberLink {
 public:
  FiberLink(std::vector<FiberSegment> segments, DispersionModel dispersion)
      : segments_(std::move(segments)), dispersion_(std::move(dispersion)) {
    if (segments_.empty()) fail(ErrorCategory::validation, "fiber link needs at least one segment");
    std::vector<std::string> bad;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
      const auto& s = segments_[k];
      std::string p = "segments[" + std::to_string(k) + "].";
      if (!(s.length_m > 0.0) || !std::isfinite(s.length_m)) bad.push_back(p + "length must be > 0");
      if (!(s.attenuation_db_per_km >= 0.0)) bad.push_back(p + "attenuation must be >= 0");
      if (!(s.excess_loss_db >= 0.0)) bad.push_back(p + "excess_loss must be >= 0");
      if (!std::isfinite(s.temperature_offset_c)) bad.push_back(p + "temperature_offset must be finite");
    }
    if (!bad.empty()) {
      std::string msg = "invalid fiber link:";
      for (const auto& b : bad) msg += "\n  " + b;
      fail(ErrorCategory::validation, msg);
    }
  }

  /// A link with no fiber at all (back-to-back calibration arm).
  static FiberLink none(DispersionModel dispersion = DispersionModel::standard_smf()) {
    return FiberLink(std::move(dispersion));
  }

  /// Convenience: consecutive spans joined by connectors of `connector_loss_db` each.
  static FiberLink spans(const std::vector<double>& lengths_m, double connector_loss_db = 0.0,
                         double attenuation_db_per_km = 0.2,
                         DispersionModel dispersion = DispersionModel::standard_smf()) {
    std::vector<FiberSegment> segs;
    for (std::size_t k = 0; k < lengths_m.size(); ++k) {
      FiberSegment s;
      s.length_m = lengths_m[k];
      s.attenuation_db_per_km = attenuation_db_per_km;
      s.excess_loss_db = k == 0 ? 0.0 : connector_loss_db;
      segs.push_back(s);
    }
    return FiberLink(std::move(segs), std::move(dispersion));
  }

  const std::vector<FiberSegment>& segments() const { return segments_; }
  const DispersionModel& dispersion() const { return dispersion_; }
  bool empty() const { return segments_.empty(); }
  double total_length() const {
    double l = 0.0;
    for (const auto& s : segments_) l += s.length_m;
    return l;
  }

  bool operator==(const FiberLink&) const = default;

 private:
  explicit FiberLink(DispersionModel dispersion) : dispersion_(std::move(dispersion)) {}
  std::vector<FiberSegment> segments_;
  DispersionModel dispersion_;
};

/// Optional thermal-expansion correction: l(T) = l·(1 + α·(T − T_eval)).
struct ThermalExpansion {
  bool enabled = false;
  double coefficient_per_c = 5.5e-7;  // fused silica
};

/// Σ k′(λ, T + offset_k)·l_k over the segments of one arm, in seconds.
inline double arm_group_delay(const FiberLink& link, double lambda_nm, double temperature_c) {
  double tau = 0.0;
  for (const auto& s : link.segments())
    tau += group_delay_coefficient(link.dispersion(), lambda_nm, temperature_c + s.temperature_offset_c) * s.length_m;
  return tau;
}

/// Σ k″(λ, T + offset_k)·ω₀·l_k over the segments of one arm, in seconds.
inline double arm_dispersion_delay(const FiberLink& link, double lambda_nm, double temperature_c) {
  double w = omega_from_nm(lambda_nm);
  double tau = 0.0;
  for (const auto& s : link.segments())
    tau += gvd_coefficient(link.dispersion(), lambda_nm, temperature_c + s.temperature_offset_c) * w * s.length_m;
  return tau;
}

/// Both terms of the residual path-delay difference between idler and signal arms.
struct PathDelayDifference {
  double group_delay = 0.0;  // Σ k′_i·l − Σ k′_s·l
  double dispersion = 0.0;   // −(Σ k″_i·ω₀,i·l − Σ k″_s·ω₀,s·l)
  double total() const { return group_delay + dispersion; }
};

inline PathDelayDifference path_delay_difference(const FiberLink& link_signal, const FiberLink& link_idler,
                                                 const PhotonPairSource& source, double temperature_c) {
  PathDelayDifference r;
  r.group_delay = arm_group_delay(link_idler, source.idler_nm, temperature_c) -
                  arm_group_delay(link_signal, source.signal_nm, temperature_c);
  r.dispersion = -(arm_dispersion_delay(link_idler, source.idler_nm, temperature_c) -
                   arm_dispersion_delay(link_signal, source.signal_nm, temperature_c));
  return r;
}

/// First temperature derivatives (per meter) of k′_i, k′_s, k″_i·ω₀,i, k″_s·ω₀,s.
inline std::array<double, 4> sensitivity_terms(const DispersionModel& model, const PhotonPairSource& source,
                                               double temperature_c, ThermalExpansion expansion = {}) {
  model.check_domain(source.signal_nm, temperature_c);
  model.check_domain(source.idler_nm, temperature_c);
  const double ws = source.signal_omega(), wi = source.idler_omega();
  auto terms = [&](double T) {
    auto ds = model.derivatives(ws, T), di = model.derivatives(wi, T);
    double stretch = expansion.enabled ? 1.0 + expansion.coefficient_per_c * (T - temperature_c) : 1.0;
    return std::array<double, 4>{
        stretch * (di.n + wi * di.dn) / kSpeedOfLight,
        stretch * (ds.n + ws * ds.dn) / kSpeedOfLight,
        stretch * wi * (2.0 * di.dn + wi * di.d2n) / kSpeedOfLight,
        stretch * ws * (2.0 * ds.dn + ws * ds.d2n) / kSpeedOfLight,
    };
  };
  // Central differences at h and h/2, Richardson-extrapolated.
  constexpr double h = 0.01;
  auto central = [&](double step) {
    auto p = terms(temperature_c + step), m = terms(temperature_c - step);
    std::array<double, 4> d{};
    for (int k = 0; k < 4; ++k) d[k] = (p[k] - m[k]) / (2.0 * step);
    return d;
  };
  auto d1 = central(h), d2 = central(h / 2.0);
  std::array<double, 4> out{};
  for (int k = 0; k < 4; ++k) out[k] = (4.0 * d2[k] - d1[k]) / 3.0;
  return out;
}

/// Root-sum-square of the four term sensitivities, s/(m·°C).
inline double temperature_sensitivity_B(const DispersionModel& model, const PhotonPairSource& source,
                                        double temperature_c, ThermalExpansion expansion = {}) {
  auto t = sensitivity_terms(model, source, temperature_c, expansion);
  return std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2] + t[3] * t[3]);
}

inline double drift_single(double B, double length_m, double delta_t) {
  if (!(length_m > 0.0)) fail(ErrorCategory::domain, "fiber length must be > 0");
  return B * length_m * delta_t;
}

inline double drift_segmented(double B, const std::vector<double>& lengths_m, double delta_t) {
  if (lengths_m.empty()) fail(ErrorCategory::domain, "segment list is empty");
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < lengths_m.size(); ++k) {
    if (!(lengths_m[k] > 0.0))
      fail(ErrorCategory::domain, "segment " + std::to_string(k) + " length must be > 0");
    sum_sq += lengths_m[k] * lengths_m[k];
  }
  return B * std::sqrt(sum_sq) * delta_t;
}

inline double link_loss(const FiberLink& link) {
  double db = 0.0;
  for (const auto& s : link.segments()) db += s.attenuation_db_per_km * s.length_m * 1e-3 + s.excess_loss_db;
  return db;
}

}  // namespace qsync
