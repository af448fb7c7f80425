#include <CLI11.hpp>

#include <iostream>

#include "qsync/commands.hpp"

int main(int argc, char** argv) {
  using namespace qsync;
  CLI::App app{"qsync: fiber-segmented HOM clock synchronization simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  RunOptions opt;
  bool progress = false;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "scenario file (key = value)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--preset", opt.presets, "preset name; repeatable")->take_all();
  };

  auto* drift = app.add_subcommand("drift-map", "path-delay drift vs temperature and segmentation");
  auto* dip = app.add_subcommand("dip-scan", "HOM dip profile for the configured link or fiber presets");
  auto* coin = app.add_subcommand("coincidence", "one acquisition epoch with and without fiber, fitted offset");
  auto* sync = app.add_subcommand("sync-run", "closed-loop balance plus out-of-loop offset series");
  auto* td = app.add_subcommand("tdev", "time deviation of an offset CSV");
  auto* plan = app.add_subcommand("plan-segments", "fewest equal spools meeting the drift and loss limits");
  auto* cal = app.add_subcommand("calibrate", "refit the free source parameters to the reference observables");
  for (auto* s : {drift, dip, coin, sync, plan, cal}) common(s, true);
  common(td, false);
  coin->add_flag("--timestamps", opt.write_timestamps, "also write the raw timestamp streams");
  sync->add_option("--duration", opt.duration_s, "simulated seconds, overrides duration_s");
  sync->add_flag("--progress", progress, "report progress on stderr");
  td->add_option("--input", opt.input, "CSV with t_s and offset_s (or offset_ps)")->required();
  td->add_option("--estimator", opt.estimator, "overlapping | non-overlapping")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* chosen = app.get_subcommands().front();
  if (progress)
    opt.progress = [last = -1](double f) mutable {
      int pct = int(f * 100.0);
      if (pct != last) std::cerr << "\r" << pct << "%" << std::flush, last = pct;
      if (pct >= 100) std::cerr << "\n";
    };

  try {
    std::optional<ScenarioConfig> cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed) {
      if (!cfg) fail(ErrorCategory::config, "--seed needs --config");
      cfg->seed = *seed;
    }
    auto r = run_command(chosen->get_name(), cfg ? &*cfg : nullptr, opt, std::cout);
    std::cout << "wrote " << r.files.size() << " files to " << opt.out_dir << "\n";
    return 0;
  } catch (const kv::ParseErrors& e) {
    for (const auto& m : e.messages()) std::cerr << "qsync: error[" << to_string(e.category()) << "]: " << m << "\n";
    return exit_code(e.category());
  } catch (const Error& e) {
    std::cerr << "qsync: error[" << to_string(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "qsync: error[internal]: " << e.what() << "\n";
    return 1;
  }
}
