#pragma once

// The qsync commands as library functions, so tests can drive them without a process.

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qsync/calibration.hpp"
#include "qsync/config.hpp"
#include "qsync/hom.hpp"
#include "qsync/planner.hpp"
#include "qsync/seeding.hpp"
#include "qsync/sync_loop.hpp"
#include "qsync/timing_stats.hpp"

namespace qsync {

inline constexpr std::string_view kVersion = "0.1.0";

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> n{"drift-map", "dip-scan", "coincidence", "sync-run",
                                          "tdev",      "plan-segments", "calibrate"};
  return n;
}

struct RunOptions {
  std::string out_dir = ".";
  std::vector<std::string> presets;  // as given on the command line, in order
  std::string input;                 // tdev: offset series CSV
  std::optional<double> duration_s;  // sync-run override
  std::string estimator = "overlapping";
  bool write_timestamps = false;     // coincidence: also dump the raw streams
  std::function<void(double)> progress;
};

struct CommandResult {
  std::vector<std::string> files;  // relative to out_dir, manifest last
  std::string config_hash;
};

/// 12 significant digits, scientific.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.11e", v);
  return buf;
}

inline std::string config_hash(const ScenarioConfig& c) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(serialize_config(c)));
  return buf;
}

namespace detail {

/// Output directory that stamps each file with the manifest reference and remembers it.
class OutputSet {
 public:
  OutputSet(const std::string& dir, std::string stamp) : dir_(dir), stamp_(std::move(stamp)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_))
      fail(ErrorCategory::io, "cannot create output directory " + dir + (ec ? ": " + ec.message() : ""));
  }

  std::ofstream open(const std::string& name) {
    auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << stamp_ << "\n";
    files_.push_back(name);
    return out;
  }

  const std::string& stamp() const { return stamp_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void adopt(const std::string& name) { files_.push_back(name); }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::string stamp_;
  std::vector<std::string> files_;
};

inline void check_stream(std::ofstream& out, const std::string& name) {
  out.flush();
  if (!out) fail(ErrorCategory::io, "write failed for " + name);
}

// ---- drift-map ----------------------------------------------------------------

inline void drift_map(const ScenarioConfig& c, OutputSet& o, std::ostream& log) {
  const auto model = dispersion_model(c);
  const double B = temperature_sensitivity_B(model, c.source, c.temperature.mean);

  {
    auto f = o.open("drift_vs_temperature.csv");
    f << "length_km,delta_t_c,drift_ps\n";
    const auto steps = static_cast<long>(std::floor(c.drift_sweep_max_c / c.drift_sweep_step_c + 1e-9));
    for (double km : {1.0, 2.0, 3.0, 4.0, 5.0, 10.0})
      for (long i = 0; i <= steps; ++i) {
        double dT = double(i) * c.drift_sweep_step_c;
        f << fmt(km) << ',' << fmt(dT) << ',' << fmt(B * km * 1e3 * dT * 1e12) << '\n';
      }
    check_stream(f, "drift_vs_temperature.csv");
  }
  {
    auto f = o.open("drift_vs_length.csv");
    f << "length_km,drift_ps\n";
    for (int km = 1; km <= 10; ++km)
      f << fmt(km) << ',' << fmt(drift_single(B, km * 1e3, c.drift_sweep_max_c) * 1e12) << '\n';
    check_stream(f, "drift_vs_length.csv");
  }
  {
    auto f = o.open("drift_segmented.csv");
    f << "label,segments,longest_segment_km,drift_ps\n";
    const double total = 10'000.0;
    for (int m = 1; m <= 10; ++m) {
      std::vector<double> split(std::size_t(m), total / m);
      f << "equal," << m << ',' << fmt(total / m * 1e-3) << ','
        << fmt(drift_segmented(B, split, c.drift_delta_t_c) * 1e12) << '\n';
    }
    std::vector<double> lengths;
    for (const auto& s : c.signal_segments) lengths.push_back(s.length_m);
    double drift = drift_segmented(B, lengths, c.drift_delta_t_c);
    f << "config," << lengths.size() << ',' << fmt(*std::max_element(lengths.begin(), lengths.end()) * 1e-3) << ','
      << fmt(drift * 1e12) << '\n';
    check_stream(f, "drift_segmented.csv");
    log << "B = " << fmt(B) << " s/(m*C); configured split drift at " << c.drift_delta_t_c
        << " C = " << fmt(drift * 1e12) << " ps\n";
  }
  {
    auto f = o.open("drift_summary.csv");
    f << "B_s_per_m_c,delta_t_c,sweep_max_c,temperature_c\n";
    f << fmt(B) << ',' << fmt(c.drift_delta_t_c) << ',' << fmt(c.drift_sweep_max_c) << ','
      << fmt(c.temperature.mean) << '\n';
    check_stream(f, "drift_summary.csv");
  }
}

// ---- dip-scan -------------------------------------------------------------------

struct DipScenario {
  std::string name;
  std::vector<FiberSegment> signal, idler;
};

inline std::vector<DipScenario> dip_scenarios(const ScenarioConfig& c, const std::vector<std::string>& presets) {
  std::vector<DipScenario> out;
  for (const auto& p : presets)
    if (const auto* f = find_fiber_preset(p)) {
      DipScenario d{f->name, {}, {}};
      for (double l : f->lengths_m) d.signal.push_back(FiberSegment{l});
      d.idler = d.signal;
      out.push_back(std::move(d));
    }
  if (out.empty()) out.push_back({"config", c.signal_segments, c.idler_segments});
  return out;
}

inline void dip_scan(const ScenarioConfig& c, const std::vector<std::string>& presets, OutputSet& o,
                     std::ostream& log) {
  const auto model = dispersion_model(c);
  const auto base = gaussian_jsa(c.source, std::size_t(c.hom_grid));
  const double T = c.temperature.mean;
  auto summary_rows = std::string();
  for (const auto& sc : dip_scenarios(c, presets)) {
    auto ps = fiber_phase(make_link(sc.signal, model), c.source.mean_nm(), T);
    auto pi = fiber_phase(make_link(sc.idler, model), c.source.mean_nm(), T);
    auto f = apply_dispersion(base, ps, pi);
    // The group-delay mismatch of the arms moves the dip to δ = a_s − a_i.
    const double center = ps.linear - pi.linear;
    auto profile = hom_profile(f, delay_grid(c.hom_half_range_ps * 1e-12, std::size_t(c.hom_points), center),
                               c.source.distinguishability);
    auto counts = sample_dip_counts(profile, c.lock.baseline_rate_cps, c.lock.dwell_s,
                                    child_seed(c.seed, "dip-scan/" + sc.name));
    auto m = dip_metrics(profile);

    const std::string name = "dip_" + sc.name + ".csv";
    auto out = o.open(name);
    out << "delay_ps,probability,sampled_counts\n";
    for (std::size_t k = 0; k < profile.delays.size(); ++k)
      out << fmt(profile.delays[k] * 1e12) << ',' << fmt(profile.probability[k]) << ',' << counts[k] << '\n';
    check_stream(out, name);
    summary_rows += sc.name + ',' + fmt(m.visibility) + ',' + fmt(m.width_fwhm * 1e12) + ',' +
                    fmt(m.minimum_delay * 1e12) + '\n';
    log << sc.name << ": visibility " << fmt(m.visibility) << ", width " << fmt(m.width_fwhm * 1e12) << " ps\n";
  }
  auto s = o.open("dip_summary.csv");
  s << "scenario,visibility,fwhm_ps,minimum_delay_ps\n" << summary_rows;
  check_stream(s, "dip_summary.csv");
}

// ---- coincidence ------------------------------------------------------------------

inline void write_density(OutputSet& o, const std::string& name, const ArrivalDensity& d) {
  auto out = o.open(name);
  out << "t_ps,pdf_per_ps\n";
  for (std::size_t k = 0; k < d.pdf.size(); ++k) out << fmt(d.time(k) * 1e12) << ',' << fmt(d.pdf[k] * 1e-12) << '\n';
  check_stream(out, name);
}

inline void coincidence(const ScenarioConfig& c, bool write_timestamps, OutputSet& o, std::ostream& log) {
  const auto model = dispersion_model(c);
  const auto ls = make_link(c.signal_segments, model), li = make_link(c.idler_segments, model);
  const auto da = make_detector(c.detector_a), db = make_detector(c.detector_b);
  const auto ca = make_clock(c.clock_a), cb = make_clock(c.clock_b);
  const double T = c.temperature.mean, jitter = c.instrument_jitter_ps * 1e-12;

  auto dens0 = arrival_difference_density(gaussian_jsa(c.source, std::size_t(c.hom_grid)), da, db, jitter);
  auto ps = fiber_phase(ls, c.source.mean_nm(), T), pi = fiber_phase(li, c.source.mean_nm(), T);
  auto grid = grid_for_dispersion(c.source, ps, pi);
  auto dens1 = arrival_difference_density(apply_dispersion(gaussian_jsa(c.source, grid), ps, pi), da, db, jitter);
  write_density(o, "density_back_to_back.csv", dens0);
  write_density(o, "density_fiber.csv", dens1);

  struct Case {
    const char* name;
    const ArrivalDensity* density;
    GaussianFitResult fit;
    std::uint64_t coincidences;
  };
  std::vector<Case> cases{{"back_to_back", &dens0, {}, 0}, {"fiber", &dens1, {}, 0}};
  for (auto& k : cases) {
    auto [a, b] = simulate_timestamps(c.source.pair_rate, *k.density, ca, cb, da, db, c.epoch_s,
                                      child_seed(c.seed, std::string("coincidence/") + k.name));
    auto h = coincidence_histogram(a, b, c.bin_width_ps * 1e-12, c.window_ps * 1e-12);
    k.coincidences = h.total_coincidences;
    const std::string hist = std::string("histogram_") + k.name + ".csv";
    write_histogram_csv(h, o.path(hist), o.stamp());
    o.adopt(hist);
    if (write_timestamps) {
      const std::string ts = std::string("timestamps_") + k.name + ".csv";
      write_timestamps_csv({&a, &b}, o.path(ts), o.stamp());
      o.adopt(ts);
    }
    k.fit = fit_gaussian(h);
  }

  auto fits = o.open("coincidence_fit.csv");
  fits << "case,center_ps,center_stderr_ps,sigma_ps,fwhm_ps,coincidences,model_fwhm_ps\n";
  for (const auto& k : cases)
    fits << k.name << ',' << fmt(k.fit.center * 1e12) << ',' << fmt(k.fit.center_stderr * 1e12) << ','
         << fmt(k.fit.sigma * 1e12) << ',' << fmt(k.fit.sigma * kFwhmPerSigma * 1e12) << ',' << k.coincidences << ','
         << fmt(k.density->fwhm() * 1e12) << '\n';
  check_stream(fits, "coincidence_fit.csv");

  auto est = estimate_offset(cases[1].fit, cases[0].fit.center, cases[0].fit.center_stderr);
  auto pd = path_delay_difference(ls, li, c.source, T);
  auto off = o.open("offset.csv");
  off << "measured_shift_ps,uncertainty_ps,predicted_shift_ps,group_delay_term_ps,dispersion_term_ps\n";
  // a − b shifts by minus the idler-minus-signal group delay.
  off << fmt(est.offset * 1e12) << ',' << fmt(est.uncertainty * 1e12) << ',' << fmt(-pd.group_delay * 1e12) << ','
      << fmt(pd.group_delay * 1e12) << ',' << fmt(pd.dispersion * 1e12) << '\n';
  check_stream(off, "offset.csv");
  log << "offset shift " << fmt(est.offset * 1e12) << " +/- " << fmt(est.uncertainty * 1e12) << " ps (model "
      << fmt(-pd.group_delay * 1e12) << " ps); widths " << fmt(cases[0].fit.sigma * kFwhmPerSigma * 1e12) << " / "
      << fmt(cases[1].fit.sigma * kFwhmPerSigma * 1e12) << " ps\n";
}

// ---- sync-run -------------------------------------------------------------------------

inline void write_tdev(OutputSet& o, const std::string& name, const TdevResult& r) {
  auto out = o.open(name);
  out << "tau_s,tdev_s,n_samples\n";
  for (std::size_t k = 0; k < r.taus.size(); ++k)
    out << fmt(r.taus[k]) << ',' << fmt(r.tdev[k]) << ',' << r.sample_counts[k] << '\n';
  check_stream(out, name);
}

inline void sync_run(const ScenarioConfig& c, const RunOptions& opt, OutputSet& o, std::ostream& log) {
  const double duration = opt.duration_s.value_or(c.duration_s);
  const auto res = run_sync(make_sync_scenario(c), duration, c.seed, opt.progress);

  {
    auto f = o.open("residual.csv");
    f << "t_s,residual_fs\n";
    const auto& r = res.in_loop_residual;
    for (std::size_t k = 0; k < r.size(); ++k) f << fmt(r.times[k]) << ',' << fmt(r.offsets[k] * 1e15) << '\n';
    check_stream(f, "residual.csv");
  }
  const auto& x = res.out_of_loop_offsets;
  {
    auto f = o.open("offsets.csv");
    f << "t_s,offset_ps,uncertainty_ps\n";
    for (std::size_t k = 0; k < x.size(); ++k)
      f << fmt(x.times[k]) << ',' << fmt(x.offsets[k] * 1e12) << ','
        << fmt(x.uncertainties.empty() ? 0.0 : x.uncertainties[k] * 1e12) << '\n';
    check_stream(f, "offsets.csv");
  }
  {
    auto f = o.open("actuator.csv");
    f << "t_s,setting_ps,imbalance_fs,estimate_fs,locked,held\n";
    for (const auto& a : res.actuator_log)
      f << fmt(a.time) << ',' << fmt(a.setting * 1e12) << ',' << fmt(a.imbalance * 1e15) << ','
        << fmt(a.estimate * 1e15) << ',' << int(a.locked) << ',' << int(a.held) << '\n';
    check_stream(f, "actuator.csv");
  }
  {
    auto f = o.open("events.log");
    for (const auto& e : res.events) f << fmt(e.time) << ' ' << e.kind << ' ' << e.detail << '\n';
    check_stream(f, "events.log");
  }
  if (res.in_loop_residual.size() >= 4) write_tdev(o, "tdev_in_loop.csv", tdev(res.in_loop_residual));
  if (x.size() >= 4) write_tdev(o, "tdev_offsets.csv", tdev(x));

  double mean = 0.0;
  for (double v : x.offsets) mean += v / double(std::max<std::size_t>(1, x.size()));
  auto s = o.open("sync_summary.csv");
  s << "duration_s,updates,epochs,lock_losses,dip_visibility,dip_fwhm_ps,calibration_center_ps,"
       "calibration_stderr_ps,predicted_offset_ps,mean_offset_ps\n";
  s << fmt(duration) << ',' << res.in_loop_residual.size() << ',' << x.size() << ',' << res.lock_losses << ','
    << fmt(res.dip.visibility) << ',' << fmt(res.dip.fwhm * 1e12) << ',' << fmt(res.calibration_center * 1e12) << ','
    << fmt(res.calibration_stderr * 1e12) << ',' << fmt(res.predicted_offset * 1e12) << ',' << fmt(mean * 1e12)
    << '\n';
  check_stream(s, "sync_summary.csv");
  log << res.in_loop_residual.size() << " lock updates, " << x.size() << " epochs, " << res.lock_losses
      << " lock losses\n";
}

// ---- tdev, plan-segments, calibrate -------------------------------------------------------

inline void tdev_command(const RunOptions& opt, OutputSet& o, std::ostream& log) {
  if (opt.input.empty()) fail(ErrorCategory::config, "tdev needs --input PATH (CSV with t_s and offset_s or offset_ps)");
  TdevEstimator est;
  if (opt.estimator == "overlapping")
    est = TdevEstimator::overlapping;
  else if (opt.estimator == "non-overlapping")
    est = TdevEstimator::non_overlapping;
  else
    fail(ErrorCategory::config, "unknown estimator '" + opt.estimator + "' (overlapping, non-overlapping)");
  auto r = tdev(read_offset_series_csv(opt.input), est);
  write_tdev(o, "tdev.csv", r);
  log << r.taus.size() << " averaging times\n";
}

inline void plan_command(const ScenarioConfig& c, OutputSet& o, std::ostream& log) {
  const auto pc = make_plan_constraints(c.planner);
  const auto plan = plan_segments(pc);
  auto f = o.open("plan.csv");
  f << "segments,segment_length_m,drift_ps,loss_db,feasible\n";
  char line[160];
  log << "  m  segment_m   drift_ps   loss_dB  feasible\n";
  for (const auto& r : plan.table) {
    f << r.segments << ',' << fmt(pc.total_length / r.segments) << ',' << fmt(r.drift * 1e12) << ',' << fmt(r.loss)
      << ',' << (r.feasible() ? "true" : "false") << '\n';
    std::snprintf(line, sizeof line, "%3d %10.1f %10.4f %9.3f  %s\n", r.segments, pc.total_length / r.segments,
                  r.drift * 1e12, r.loss, r.feasible() ? "yes" : "no");
    log << line;
  }
  check_stream(f, "plan.csv");

  auto s = o.open("plan_summary.csv");
  s << "label,segments,drift_ps,loss_db,drift_limit_ps,feasible\n";
  const double limit = pc.coherence_time / pc.safety_factor;
  s << "recommended," << plan.lengths.size() << ',' << fmt(plan.drift * 1e12) << ',' << fmt(plan.loss) << ','
    << fmt(limit * 1e12) << ',' << (plan.feasible ? "true" : "false") << '\n';
  std::vector<double> lengths;
  double sum = 0.0;
  for (const auto& seg : c.signal_segments) lengths.push_back(seg.length_m), sum += seg.length_m;
  if (std::abs(sum - pc.total_length) <= 1.0) {
    auto e = evaluate_plan(lengths, pc);
    bool ok = e.drift <= limit && e.loss <= pc.loss_budget;
    s << "config," << lengths.size() << ',' << fmt(e.drift * 1e12) << ',' << fmt(e.loss) << ',' << fmt(limit * 1e12)
      << ',' << (ok ? "true" : "false") << '\n';
  }
  check_stream(s, "plan_summary.csv");
  log << (plan.feasible ? "recommended: " : "no feasible split; largest tried: ") << plan.lengths.size()
      << " equal segments\n";
}

inline void calibrate_command(const ScenarioConfig& c, OutputSet& o, std::ostream& log) {
  auto r = calibrate(c.source);
  const double jd2 = c.detector_a.jitter_ps * c.detector_a.jitter_ps + c.detector_b.jitter_ps * c.detector_b.jitter_ps;
  const double total_ps = r.total_jitter * 1e12;
  auto f = o.open("calibration.cfg");
  f << "source.difference_bandwidth_rad_s = " << kv::format_exact(r.source.difference_bandwidth) << '\n'
    << "source.spectral_tilt = " << kv::format_exact(r.source.spectral_tilt) << '\n'
    << "source.distinguishability = " << kv::format_exact(r.source.distinguishability) << '\n';
  if (total_ps * total_ps >= jd2)
    f << "instrument.jitter_ps = " << kv::format_exact(std::sqrt(total_ps * total_ps - jd2)) << '\n';
  else
    f << "# detector jitters alone exceed the calibrated total of " << kv::format_exact(total_ps) << " ps\n";
  check_stream(f, "calibration.cfg");
  log << "total timing jitter " << fmt(total_ps) << " ps\n";
}

}  // namespace detail

/// Runs one command. `config` may be null only for `tdev`. Presets in `opt`
/// are applied to a copy of the config before anything else.
inline CommandResult run_command(const std::string& name, const ScenarioConfig* config, const RunOptions& opt,
                                 std::ostream& log) {
  if (std::find(command_names().begin(), command_names().end(), name) == command_names().end())
    fail(ErrorCategory::config, "unknown command '" + name + "'");
  std::optional<ScenarioConfig> cfg;
  if (config) {
    cfg = *config;
    // Fiber presets name dip-scan scenarios; elsewhere they replace both arms.
    for (const auto& p : opt.presets)
      if (name != "dip-scan" || !find_fiber_preset(p)) apply_preset(*cfg, p);
    auto errs = validation_errors(*cfg);
    if (!errs.empty()) throw kv::ParseErrors(ErrorCategory::validation, std::move(errs));
  } else if (name != "tdev") {
    fail(ErrorCategory::config, name + " needs --config PATH");
  } else {
    if (!opt.presets.empty()) fail(ErrorCategory::config, "tdev takes no presets");
  }
  if (name == "dip-scan")
    for (const auto& p : opt.presets)
      if (!find_fiber_preset(p)) {
        bool acq = false;
        for (const auto& a : acquisition_presets()) acq = acq || a.name == p;
        if (!acq) fail(ErrorCategory::config, "unknown preset '" + p + "' (known: " + known_presets() + ")");
      }

  CommandResult result;
  result.config_hash = cfg ? config_hash(*cfg) : "none";
  const std::string seed = cfg ? std::to_string(cfg->seed) : "none";
  detail::OutputSet out(opt.out_dir, "# manifest run_manifest.txt command=" + name + " config_hash=" +
                                         result.config_hash + " seed=" + seed + " version=" + std::string(kVersion));

  if (name == "drift-map") detail::drift_map(*cfg, out, log);
  else if (name == "dip-scan") detail::dip_scan(*cfg, opt.presets, out, log);
  else if (name == "coincidence") detail::coincidence(*cfg, opt.write_timestamps, out, log);
  else if (name == "sync-run") detail::sync_run(*cfg, opt, out, log);
  else if (name == "tdev") detail::tdev_command(opt, out, log);
  else if (name == "plan-segments") detail::plan_command(*cfg, out, log);
  else detail::calibrate_command(*cfg, out, log);

  if (cfg) {
    auto f = out.open("resolved_config.cfg");
    f << serialize_config(*cfg);
    detail::check_stream(f, "resolved_config.cfg");
  }

  std::ofstream m(out.path("run_manifest.txt"), std::ios::binary);
  if (!m) fail(ErrorCategory::io, "cannot write " + out.path("run_manifest.txt"));
  m << "version = " << kVersion << "\ncommand = " << name << "\nconfig_hash = fnv1a64:" << result.config_hash
    << "\nseed = " << seed << "\n";
  for (const auto& p : opt.presets) m << "preset = " << p << "\n";
  if (name == "tdev") m << "input = " << opt.input << "\nestimator = " << opt.estimator << "\n";
  if (name == "sync-run" && opt.duration_s) m << "duration_s = " << kv::format_exact(*opt.duration_s) << "\n";
  for (const auto& f : out.files()) m << "file = " << f << "\n";
  m.flush();
  if (!m) fail(ErrorCategory::io, "write failed for run_manifest.txt");
  result.files = out.files();
  result.files.push_back("run_manifest.txt");
  return result;
}

}  // namespace qsync
