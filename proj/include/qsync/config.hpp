#pragma once

// Scenario files: the dotted key=value format of keyvalue.hpp, stored in the
// units a user types (ps, fs, km/m, °C) and converted to SI when a module
// object is built. Keeping user units in the struct makes parse → serialize →
// parse exact.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qsync/fiber_model.hpp"
#include "qsync/keyvalue.hpp"
#include "qsync/planner.hpp"
#include "qsync/sync_loop.hpp"

namespace qsync {

struct DetectorConfig {
  double efficiency = std::sqrt(272.54 / 4e6);
  double jitter_ps = 15.0;
  double dark_rate_hz = 0.0;
  bool operator==(const DetectorConfig&) const = default;
};

struct ClockConfig {
  double offset_ps = 0.0;
  double frequency_offset = 0.0;
  double white_pm_ps = 0.0;
  bool operator==(const ClockConfig&) const = default;
};

struct LockConfig {
  bool enabled = true;
  double probe_offset_ps = 1.38;
  double dwell_s = 10.0;
  double gain = 1.0;
  double integral_gain = 0.5;
  double update_period_s = 20.0;
  double baseline_rate_cps = 2000.0;
  bool shot_noise = true;
  bool operator==(const LockConfig&) const = default;
};

struct PlannerConfig {
  double total_length_m = 10'000.0;
  long long max_segments = 10;
  double connector_loss_db = 0.3;
  double attenuation_db_per_km = 0.2;
  double loss_budget_db = 6.0;
  double coherence_time_ps = 3.25;
  double B_s_per_m_c = 5.03e-14;
  double delta_t_c = 0.006;
  double safety_factor = 1.5;
  bool operator==(const PlannerConfig&) const = default;
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  std::string preset = "tcspc-100s";
  double duration_s = 20'000.0;

  PhotonPairSource source;
  std::string dispersion_file;  // empty: built-in standard SMF model

  std::vector<FiberSegment> signal_segments{{5000.0}, {4000.0}, {1000.0}};
  std::vector<FiberSegment> idler_segments{{5000.0}, {4000.0}, {1000.0}};

  DetectorConfig detector_a, detector_b;
  ClockConfig clock_a, clock_b;
  double instrument_jitter_ps = default_instrument_jitter() * 1e12;

  double epoch_s = 100.0;
  double bin_width_ps = 4.0;
  double window_ps = 5000.0;
  bool out_of_loop = true;

  TemperatureProcess temperature;
  LockConfig lock;
  double actuator_range_ps = 330.0;
  double actuator_resolution_fs = 1.0;
  double initial_imbalance_ps = 0.0;

  long long hom_grid = 512;
  double hom_half_range_ps = 10.0;
  long long hom_points = 201;

  PlannerConfig planner;

  double drift_delta_t_c = 0.006;
  double drift_sweep_max_c = 0.1;
  double drift_sweep_step_c = 0.005;

  bool operator==(const ScenarioConfig&) const = default;
};

// ---- presets ----------------------------------------------------------------

struct FiberPreset {
  std::string name;
  std::vector<double> lengths_m;  // per arm
};

/// Equal-arm HOM scenarios. The 20 km case is the 5+4+1 km spools traversed
/// twice (Faraday-mirror return); 10 km is a single pass.
inline const std::vector<FiberPreset>& fiber_presets() {
  static const std::vector<FiberPreset> p{
      {"fiber-200m", {200.0}},
      {"fiber-10km", {5000.0, 4000.0, 1000.0}},
      {"fiber-20km", {10000.0, 8000.0, 2000.0}},
      {"fiber-single-10km", {10000.0}},
  };
  return p;
}

inline const FiberPreset* find_fiber_preset(std::string_view name) {
  for (const auto& p : fiber_presets())
    if (p.name == name) return &p;
  return nullptr;
}

inline std::string known_presets() {
  std::string s;
  for (const auto& p : acquisition_presets()) s += (s.empty() ? "" : ", ") + p.name;
  for (const auto& p : fiber_presets()) s += ", " + p.name;
  return s;
}

inline void apply_preset(ScenarioConfig& c, std::string_view name) {
  if (const auto* f = find_fiber_preset(name)) {
    c.signal_segments.clear();
    for (double l : f->lengths_m) c.signal_segments.push_back(FiberSegment{l});
    c.idler_segments = c.signal_segments;
    return;
  }
  for (const auto& p : acquisition_presets())
    if (p.name == name) {
      c.preset = p.name;
      c.detector_a.efficiency = c.detector_b.efficiency = p.efficiency;
      c.epoch_s = p.epoch_duration;
      return;
    }
  fail(ErrorCategory::config, "unknown preset '" + std::string(name) + "' (known: " + known_presets() + ")");
}

// ---- parsing ----------------------------------------------------------------

namespace detail {

inline void read_segments(kv::Reader& r, const std::string& arm, std::vector<FiberSegment>& out) {
  const std::string prefix = "link." + arm + ".segments[";
  auto keys = r.keys_with_prefix(prefix);
  if (keys.empty()) return;
  std::size_t count = 0;
  for (const auto& k : keys) {
    auto close = k.find(']', prefix.size());
    std::size_t idx = 0;
    auto digits = k.substr(prefix.size(), close == std::string::npos ? 0 : close - prefix.size());
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
    if (close == std::string::npos || digits.empty() || ec != std::errc() || p != digits.data() + digits.size()) {
      r.error_at(k, "malformed segment index");
      continue;
    }
    count = std::max(count, idx + 1);
  }
  out.assign(count, FiberSegment{});
  for (std::size_t k = 0; k < count; ++k) {
    const std::string p = prefix + std::to_string(k) + "].";
    if (!r.has(p + "length_m")) r.error(p + "length_m: missing (segment indices must be contiguous from 0)");
    if (auto v = r.number(p + "length_m")) out[k].length_m = *v;
    if (auto v = r.number(p + "excess_loss_db")) out[k].excess_loss_db = *v;
    if (auto v = r.number(p + "attenuation_db_per_km")) out[k].attenuation_db_per_km = *v;
    if (auto v = r.number(p + "temperature_offset_c")) out[k].temperature_offset_c = *v;
  }
}

class Checker {
 public:
  explicit Checker(std::vector<std::string>& errors) : errors_(errors) {}
  void positive(const std::string& key, double v) {
    if (!(v > 0.0)) errors_.push_back(key + ": must be > 0 (got " + kv::format_exact(v) + ")");
  }
  void non_negative(const std::string& key, double v) {
    if (!(v >= 0.0)) errors_.push_back(key + ": must be >= 0 (got " + kv::format_exact(v) + ")");
  }
  void unit_interval(const std::string& key, double v) {
    if (!(v >= 0.0 && v <= 1.0)) errors_.push_back(key + ": must lie in [0, 1] (got " + kv::format_exact(v) + ")");
  }
  void require(bool ok, const std::string& message) {
    if (!ok) errors_.push_back(message);
  }
  template <class F>
  void module(const std::string& block, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      errors_.push_back(block + ": " + e.what());
    }
  }

 private:
  std::vector<std::string>& errors_;
};

}  // namespace detail

/// Semantic checks with field paths; returns every problem found.
inline std::vector<std::string> validation_errors(const ScenarioConfig& c) {
  std::vector<std::string> errs;
  detail::Checker ck(errs);
  ck.positive("duration_s", c.duration_s);
  ck.module("source", [&] { c.source.validate(); });
  for (auto [arm, segs] : {std::pair{"signal", &c.signal_segments}, std::pair{"idler", &c.idler_segments}}) {
    const std::string base = std::string("link.") + arm + ".segments";
    ck.require(!segs->empty(), base + ": at least one segment is required");
    for (std::size_t k = 0; k < segs->size(); ++k) {
      const auto& s = (*segs)[k];
      const std::string p = base + "[" + std::to_string(k) + "].";
      ck.positive(p + "length_m", s.length_m);
      ck.non_negative(p + "excess_loss_db", s.excess_loss_db);
      ck.non_negative(p + "attenuation_db_per_km", s.attenuation_db_per_km);
    }
  }
  for (auto [name, d] : {std::pair{"a", &c.detector_a}, std::pair{"b", &c.detector_b}}) {
    const std::string p = std::string("detector.") + name + ".";
    ck.unit_interval(p + "efficiency", d->efficiency);
    ck.non_negative(p + "jitter_ps", d->jitter_ps);
    ck.non_negative(p + "dark_rate_hz", d->dark_rate_hz);
  }
  for (auto [name, k] : {std::pair{"a", &c.clock_a}, std::pair{"b", &c.clock_b}})
    ck.non_negative(std::string("clock.") + name + ".white_pm_ps", k->white_pm_ps);
  ck.non_negative("instrument.jitter_ps", c.instrument_jitter_ps);
  ck.positive("acquisition.epoch_s", c.epoch_s);
  ck.positive("acquisition.bin_width_ps", c.bin_width_ps);
  ck.require(c.window_ps >= c.bin_width_ps, "acquisition.window_ps: must be >= acquisition.bin_width_ps");
  ck.module("temperature", [&] { c.temperature.validate("temperature"); });
  ck.positive("lock.probe_offset_ps", c.lock.probe_offset_ps);
  ck.positive("lock.dwell_s", c.lock.dwell_s);
  ck.require(c.lock.update_period_s >= 2.0 * c.lock.dwell_s, "lock.update_period_s: must be >= 2 * lock.dwell_s");
  ck.non_negative("lock.gain", c.lock.gain);
  ck.non_negative("lock.integral_gain", c.lock.integral_gain);
  ck.positive("lock.baseline_rate_cps", c.lock.baseline_rate_cps);
  ck.positive("actuator.range_ps", c.actuator_range_ps);
  ck.positive("actuator.resolution_fs", c.actuator_resolution_fs);
  ck.require(c.hom_grid >= 16, "hom.grid: must be >= 16");
  ck.positive("hom.half_range_ps", c.hom_half_range_ps);
  ck.require(c.hom_points >= 5, "hom.points: must be >= 5");
  const auto& pl = c.planner;
  ck.positive("planner.total_length_m", pl.total_length_m);
  ck.require(pl.max_segments >= 1 && pl.max_segments <= 1000, "planner.max_segments: must lie in [1, 1000]");
  ck.non_negative("planner.connector_loss_db", pl.connector_loss_db);
  ck.positive("planner.attenuation_db_per_km", pl.attenuation_db_per_km);
  ck.positive("planner.loss_budget_db", pl.loss_budget_db);
  ck.positive("planner.coherence_time_ps", pl.coherence_time_ps);
  ck.positive("planner.B_s_per_m_c", pl.B_s_per_m_c);
  ck.positive("planner.delta_t_c", pl.delta_t_c);
  ck.positive("planner.safety_factor", pl.safety_factor);
  ck.positive("drift_map.delta_t_c", c.drift_delta_t_c);
  ck.positive("drift_map.sweep_max_c", c.drift_sweep_max_c);
  ck.positive("drift_map.sweep_step_c", c.drift_sweep_step_c);
  ck.require(c.drift_sweep_max_c / c.drift_sweep_step_c <= 1e5, "drift_map.sweep_step_c: sweep would exceed 1e5 points");
  return errs;
}

/// Parses and validates a scenario. Throws kv::ParseErrors carrying every problem.
inline ScenarioConfig parse_config(std::string_view text) {
  kv::Reader r(kv::parse(text));
  ScenarioConfig c;

  auto num = [&](const std::string& key, double& dst) {
    if (auto v = r.number(key)) dst = *v;
  };
  auto flag = [&](const std::string& key, bool& dst) {
    if (auto v = r.boolean(key)) dst = *v;
  };
  auto integer = [&](const std::string& key, long long& dst) {
    if (auto v = r.integer(key)) dst = *v;
  };

  if (auto s = r.unsigned_integer("seed"))
    c.seed = *s;
  else if (!r.has("seed"))
    r.error("seed: missing (a master seed is required; runs never draw implicit entropy)");

  // The preset sets defaults that explicit keys below may override.
  if (auto p = r.text("acquisition.preset")) {
    bool known = false;
    for (const auto& a : acquisition_presets()) known = known || a.name == *p;
    if (known)
      apply_preset(c, *p);
    else
      r.error_at("acquisition.preset", "unknown acquisition preset '" + *p + "' (known: tcspc-100s, et-12s)");
  }
  num("duration_s", c.duration_s);

  num("source.signal_nm", c.source.signal_nm);
  num("source.idler_nm", c.source.idler_nm);
  num("source.pump_nm", c.source.pump_nm);
  num("source.pump_bandwidth_nm", c.source.pump_bandwidth_nm);
  num("source.repetition_rate_hz", c.source.repetition_rate_hz);
  num("source.pair_rate_hz", c.source.pair_rate);
  num("source.sum_bandwidth_rad_s", c.source.sum_bandwidth);
  num("source.difference_bandwidth_rad_s", c.source.difference_bandwidth);
  num("source.spectral_tilt", c.source.spectral_tilt);
  num("source.distinguishability", c.source.distinguishability);
  if (auto f = r.text("dispersion.file")) c.dispersion_file = *f;

  detail::read_segments(r, "signal", c.signal_segments);
  detail::read_segments(r, "idler", c.idler_segments);

  for (auto [name, d] : {std::pair{"a", &c.detector_a}, std::pair{"b", &c.detector_b}}) {
    const std::string p = std::string("detector.") + name + ".";
    num(p + "efficiency", d->efficiency);
    num(p + "jitter_ps", d->jitter_ps);
    num(p + "dark_rate_hz", d->dark_rate_hz);
  }
  for (auto [name, k] : {std::pair{"a", &c.clock_a}, std::pair{"b", &c.clock_b}}) {
    const std::string p = std::string("clock.") + name + ".";
    num(p + "offset_ps", k->offset_ps);
    num(p + "frequency_offset", k->frequency_offset);
    num(p + "white_pm_ps", k->white_pm_ps);
  }
  num("instrument.jitter_ps", c.instrument_jitter_ps);

  num("acquisition.epoch_s", c.epoch_s);
  num("acquisition.bin_width_ps", c.bin_width_ps);
  num("acquisition.window_ps", c.window_ps);
  flag("acquisition.out_of_loop", c.out_of_loop);

  num("temperature.mean_c", c.temperature.mean);
  num("temperature.amplitude_c", c.temperature.amplitude);
  num("temperature.period_s", c.temperature.period);
  num("temperature.noise_sigma_c", c.temperature.noise_sigma);
  num("temperature.sample_interval_s", c.temperature.sample_interval);
  if (auto m = r.text("temperature.phase_mode")) {
    if (auto pm = phase_mode_from_string(*m))
      c.temperature.phase_mode = *pm;
    else
      r.error_at("temperature.phase_mode", "expected quadrature, random or common, got '" + *m + "'");
  }

  flag("lock.enabled", c.lock.enabled);
  num("lock.probe_offset_ps", c.lock.probe_offset_ps);
  num("lock.dwell_s", c.lock.dwell_s);
  num("lock.gain", c.lock.gain);
  num("lock.integral_gain", c.lock.integral_gain);
  num("lock.update_period_s", c.lock.update_period_s);
  num("lock.baseline_rate_cps", c.lock.baseline_rate_cps);
  flag("lock.shot_noise", c.lock.shot_noise);
  num("actuator.range_ps", c.actuator_range_ps);
  num("actuator.resolution_fs", c.actuator_resolution_fs);
  num("actuator.initial_imbalance_ps", c.initial_imbalance_ps);

  integer("hom.grid", c.hom_grid);
  num("hom.half_range_ps", c.hom_half_range_ps);
  integer("hom.points", c.hom_points);

  num("planner.total_length_m", c.planner.total_length_m);
  integer("planner.max_segments", c.planner.max_segments);
  num("planner.connector_loss_db", c.planner.connector_loss_db);
  num("planner.attenuation_db_per_km", c.planner.attenuation_db_per_km);
  num("planner.loss_budget_db", c.planner.loss_budget_db);
  num("planner.coherence_time_ps", c.planner.coherence_time_ps);
  num("planner.B_s_per_m_c", c.planner.B_s_per_m_c);
  num("planner.delta_t_c", c.planner.delta_t_c);
  num("planner.safety_factor", c.planner.safety_factor);

  num("drift_map.delta_t_c", c.drift_delta_t_c);
  num("drift_map.sweep_max_c", c.drift_sweep_max_c);
  num("drift_map.sweep_step_c", c.drift_sweep_step_c);

  r.reject_unknown();
  auto errors = std::move(r.errors());
  if (!errors.empty()) throw kv::ParseErrors(ErrorCategory::parse, std::move(errors));
  auto semantic = validation_errors(c);
  if (!semantic.empty()) throw kv::ParseErrors(ErrorCategory::validation, std::move(semantic));
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const kv::ParseErrors& e) {
    std::vector<std::string> m;
    for (const auto& s : e.messages()) m.push_back(path + ": " + s);
    throw kv::ParseErrors(e.category(), std::move(m));
  }
}

/// Canonical text: every key, fixed order, shortest round-trip numbers.
inline std::string serialize_config(const ScenarioConfig& c) {
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  auto num = [&](const std::string& k, double v) { line(k, kv::format_exact(v)); };
  auto flag = [&](const std::string& k, bool v) { line(k, v ? "true" : "false"); };

  line("seed", std::to_string(c.seed));
  line("acquisition.preset", c.preset);
  num("duration_s", c.duration_s);

  num("source.signal_nm", c.source.signal_nm);
  num("source.idler_nm", c.source.idler_nm);
  num("source.pump_nm", c.source.pump_nm);
  num("source.pump_bandwidth_nm", c.source.pump_bandwidth_nm);
  num("source.repetition_rate_hz", c.source.repetition_rate_hz);
  num("source.pair_rate_hz", c.source.pair_rate);
  num("source.sum_bandwidth_rad_s", c.source.sum_bandwidth);
  num("source.difference_bandwidth_rad_s", c.source.difference_bandwidth);
  num("source.spectral_tilt", c.source.spectral_tilt);
  num("source.distinguishability", c.source.distinguishability);
  if (!c.dispersion_file.empty()) line("dispersion.file", c.dispersion_file);

  for (auto [arm, segs] : {std::pair{"signal", &c.signal_segments}, std::pair{"idler", &c.idler_segments}})
    for (std::size_t k = 0; k < segs->size(); ++k) {
      const auto& s = (*segs)[k];
      const std::string p = std::string("link.") + arm + ".segments[" + std::to_string(k) + "].";
      num(p + "length_m", s.length_m);
      num(p + "excess_loss_db", s.excess_loss_db);
      num(p + "attenuation_db_per_km", s.attenuation_db_per_km);
      num(p + "temperature_offset_c", s.temperature_offset_c);
    }

  for (auto [name, d] : {std::pair{"a", &c.detector_a}, std::pair{"b", &c.detector_b}}) {
    const std::string p = std::string("detector.") + name + ".";
    num(p + "efficiency", d->efficiency);
    num(p + "jitter_ps", d->jitter_ps);
    num(p + "dark_rate_hz", d->dark_rate_hz);
  }
  for (auto [name, k] : {std::pair{"a", &c.clock_a}, std::pair{"b", &c.clock_b}}) {
    const std::string p = std::string("clock.") + name + ".";
    num(p + "offset_ps", k->offset_ps);
    num(p + "frequency_offset", k->frequency_offset);
    num(p + "white_pm_ps", k->white_pm_ps);
  }
  num("instrument.jitter_ps", c.instrument_jitter_ps);

  num("acquisition.epoch_s", c.epoch_s);
  num("acquisition.bin_width_ps", c.bin_width_ps);
  num("acquisition.window_ps", c.window_ps);
  flag("acquisition.out_of_loop", c.out_of_loop);

  num("temperature.mean_c", c.temperature.mean);
  num("temperature.amplitude_c", c.temperature.amplitude);
  num("temperature.period_s", c.temperature.period);
  num("temperature.noise_sigma_c", c.temperature.noise_sigma);
  num("temperature.sample_interval_s", c.temperature.sample_interval);
  line("temperature.phase_mode", std::string(to_string(c.temperature.phase_mode)));

  flag("lock.enabled", c.lock.enabled);
  num("lock.probe_offset_ps", c.lock.probe_offset_ps);
  num("lock.dwell_s", c.lock.dwell_s);
  num("lock.gain", c.lock.gain);
  num("lock.integral_gain", c.lock.integral_gain);
  num("lock.update_period_s", c.lock.update_period_s);
  num("lock.baseline_rate_cps", c.lock.baseline_rate_cps);
  flag("lock.shot_noise", c.lock.shot_noise);
  num("actuator.range_ps", c.actuator_range_ps);
  num("actuator.resolution_fs", c.actuator_resolution_fs);
  num("actuator.initial_imbalance_ps", c.initial_imbalance_ps);

  line("hom.grid", std::to_string(c.hom_grid));
  num("hom.half_range_ps", c.hom_half_range_ps);
  line("hom.points", std::to_string(c.hom_points));

  num("planner.total_length_m", c.planner.total_length_m);
  line("planner.max_segments", std::to_string(c.planner.max_segments));
  num("planner.connector_loss_db", c.planner.connector_loss_db);
  num("planner.attenuation_db_per_km", c.planner.attenuation_db_per_km);
  num("planner.loss_budget_db", c.planner.loss_budget_db);
  num("planner.coherence_time_ps", c.planner.coherence_time_ps);
  num("planner.B_s_per_m_c", c.planner.B_s_per_m_c);
  num("planner.delta_t_c", c.planner.delta_t_c);
  num("planner.safety_factor", c.planner.safety_factor);

  num("drift_map.delta_t_c", c.drift_delta_t_c);
  num("drift_map.sweep_max_c", c.drift_sweep_max_c);
  num("drift_map.sweep_step_c", c.drift_sweep_step_c);
  return out;
}

// ---- conversion to module objects --------------------------------------------

inline DispersionModel dispersion_model(const ScenarioConfig& c) {
  return c.dispersion_file.empty() ? DispersionModel::standard_smf() : DispersionModel::load(c.dispersion_file);
}

inline FiberLink make_link(const std::vector<FiberSegment>& segments, const DispersionModel& model) {
  return FiberLink(segments, model);
}

inline DetectorModel make_detector(const DetectorConfig& d) {
  return {d.efficiency, d.jitter_ps * 1e-12, d.dark_rate_hz};
}

inline ClockModel make_clock(const ClockConfig& k) {
  return {k.offset_ps * 1e-12, k.frequency_offset, k.white_pm_ps * 1e-12};
}

inline PlanConstraints make_plan_constraints(const PlannerConfig& p) {
  PlanConstraints c;
  c.total_length = p.total_length_m;
  c.max_segments = int(p.max_segments);
  c.connector_loss = p.connector_loss_db;
  c.attenuation = p.attenuation_db_per_km;
  c.loss_budget = p.loss_budget_db;
  c.coherence_time = p.coherence_time_ps * 1e-12;
  c.B = p.B_s_per_m_c;
  c.delta_t = p.delta_t_c;
  c.safety_factor = p.safety_factor;
  return c;
}

inline SyncScenario make_sync_scenario(const ScenarioConfig& c) {
  auto model = dispersion_model(c);
  SyncScenario sc;
  sc.source = c.source;
  sc.link_signal = make_link(c.signal_segments, model);
  sc.link_idler = make_link(c.idler_segments, model);
  sc.temperature = c.temperature;
  sc.lock.enabled = c.lock.enabled;
  sc.lock.probe_offset = c.lock.probe_offset_ps * 1e-12;
  sc.lock.dwell_per_probe = c.lock.dwell_s;
  sc.lock.gain = c.lock.gain;
  sc.lock.integral_gain = c.lock.integral_gain;
  sc.lock.update_period = c.lock.update_period_s;
  sc.lock.baseline_rate = c.lock.baseline_rate_cps;
  sc.lock.shot_noise = c.lock.shot_noise;
  sc.actuator = DelayActuator(c.actuator_range_ps * 1e-12, c.actuator_resolution_fs * 1e-15);
  sc.detector_a = make_detector(c.detector_a);
  sc.detector_b = make_detector(c.detector_b);
  sc.clock_a = make_clock(c.clock_a);
  sc.clock_b = make_clock(c.clock_b);
  sc.instrument_jitter = c.instrument_jitter_ps * 1e-12;
  sc.epoch_duration = c.epoch_s;
  sc.bin_width = c.bin_width_ps * 1e-12;
  sc.histogram_window = c.window_ps * 1e-12;
  sc.out_of_loop = c.out_of_loop;
  sc.initial_imbalance = c.initial_imbalance_ps * 1e-12;
  return sc;
}

}  // namespace qsync
