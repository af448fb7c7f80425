#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "qsync/commands.hpp"

using namespace qsync;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("qsync_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Data rows of a command CSV (manifest line and header skipped), split on commas.
std::vector<std::vector<std::string>> rows(const fs::path& p, std::string* header = nullptr) {
  std::ifstream in(p);
  std::string line;
  std::vector<std::vector<std::string>> out;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (header) *header = line;
      seen_header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    out.push_back(cells);
  }
  return out;
}

ScenarioConfig defaults(std::uint64_t seed = 7) {
  ScenarioConfig c;
  c.seed = seed;
  return c;
}

RunOptions to(const fs::path& dir) {
  RunOptions o;
  o.out_dir = dir.string();
  return o;
}

std::string bundled(const std::string& name) { return std::string(QSYNC_SOURCE_DIR) + "/scenarios/" + name; }

template <class F>
std::vector<std::string> messages_of(F&& f) {
  try {
    f();
  } catch (const kv::ParseErrors& e) {
    return e.messages();
  }
  return {};
}

}  // namespace

TEST(Config, BundledScenarioRoundTrips) {
  auto a = load_config(bundled("paper_20km.cfg"));
  auto text = serialize_config(a);
  auto b = parse_config(text);
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_config(b), text);
}

TEST(Config, DefaultsRoundTripExactly) {
  auto c = defaults(123456789012345ull);
  c.instrument_jitter_ps = 0.1 + 0.2;  // not representable in short decimal
  c.clock_b.offset_ps = -1.0 / 3.0;
  c.temperature.phase_mode = PhaseMode::random;
  c.signal_segments.push_back(FiberSegment{1.0 / 7.0, 0.3, 0.18, -0.01});
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, MissingSeedIsAnError) {
  auto m = messages_of([] { parse_config("duration_s = 100\n"); });
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NE(m[0].find("seed"), std::string::npos);
}

TEST(Config, NegativeLengthNamesFieldPath) {
  auto m = messages_of([] { parse_config("seed = 1\nlink.signal.segments[0].length_m = -5\n"); });
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NE(m[0].find("link.signal.segments[0].length_m"), std::string::npos);
  try {
    parse_config("seed = 1\nlink.signal.segments[0].length_m = -5\n");
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::validation);
  }
}

TEST(Config, CollectsAllErrors) {
  auto m = messages_of([] {
    parse_config(
        "seed = 1\n"
        "bogus.key = 3\n"
        "lock.gain = fast\n"
        "temperature.phase_mode = sideways\n"
        "detector.a.efficiency = 1.5\n");
  });
  // Syntax/type problems are reported together; semantic checks run once those are clean.
  ASSERT_EQ(m.size(), 3u);
  auto all = m[0] + m[1] + m[2];
  EXPECT_NE(all.find("bogus.key (line 2, column 13): unknown key"), std::string::npos) << all;
  EXPECT_NE(all.find("lock.gain"), std::string::npos);
  EXPECT_NE(all.find("temperature.phase_mode"), std::string::npos);

  auto v = messages_of([] {
    parse_config("seed = 1\ndetector.a.efficiency = 1.5\nlink.idler.segments[0].length_m = 0\nacquisition.epoch_s = -1\n");
  });
  EXPECT_EQ(v.size(), 3u);
}

TEST(Config, SyntaxErrorsCarryLineAndColumn) {
  auto m = messages_of([] { parse_config("seed = 1\nthis line has no equals\n"); });
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NE(m[0].find("line 2, column 1"), std::string::npos);
}

TEST(Config, SegmentIndicesMustBeContiguous) {
  auto m = messages_of([] { parse_config("seed = 1\nlink.signal.segments[1].length_m = 5\n"); });
  ASSERT_FALSE(m.empty());
  EXPECT_NE(m[0].find("link.signal.segments[0].length_m"), std::string::npos);
}

TEST(Config, AcquisitionPresetSetsDefaultsThatKeysOverride) {
  auto c = parse_config("seed = 1\nacquisition.preset = et-12s\n");
  EXPECT_DOUBLE_EQ(c.epoch_s, 12.0);
  EXPECT_DOUBLE_EQ(c.detector_a.efficiency, 0.003);
  c = parse_config("seed = 1\nacquisition.preset = et-12s\nacquisition.epoch_s = 24\n");
  EXPECT_DOUBLE_EQ(c.epoch_s, 24.0);
  EXPECT_FALSE(messages_of([] { parse_config("seed = 1\nacquisition.preset = nope\n"); }).empty());
}

TEST(Config, PresetsAndConversion) {
  auto c = defaults();
  apply_preset(c, "fiber-single-10km");
  ASSERT_EQ(c.signal_segments.size(), 1u);
  EXPECT_EQ(c.idler_segments, c.signal_segments);
  EXPECT_THROW(apply_preset(c, "fiber-3km"), Error);
  auto sc = make_sync_scenario(defaults());
  EXPECT_DOUBLE_EQ(sc.detector_a.timing_jitter_sigma, 15e-12);
  EXPECT_DOUBLE_EQ(sc.actuator.resolution, 1e-15);
  EXPECT_EQ(sc.link_signal.segments().size(), 3u);
}

TEST(Cli, DriftMapMatchesClosedForm) {
  auto dir = scratch("drift");
  auto c = defaults();
  std::ostringstream log;
  run_command("drift-map", &c, to(dir), log);
  const double B = temperature_sensitivity_B(DispersionModel::standard_smf(), c.source, 22.0);

  auto seg = rows(dir / "drift_segmented.csv");
  ASSERT_EQ(seg.size(), 11u);
  for (int m = 1; m <= 10; ++m) {
    double expect = B * std::sqrt(double(m)) * (1e4 / m) * 0.006 * 1e12;
    EXPECT_NEAR(std::stod(seg[m - 1][3]), expect, 1e-10 * expect);
  }
  EXPECT_EQ(seg[10][0], "config");
  double star = std::stod(seg[10][3]);
  EXPECT_GT(star, 1.7);
  EXPECT_LT(star, 2.8);

  // Fig. 1(a): drift ∝ length.
  auto lin = rows(dir / "drift_vs_length.csv");
  ASSERT_EQ(lin.size(), 10u);
  for (const auto& r : lin) EXPECT_NEAR(std::stod(r[1]) / std::stod(r[0]), B * 1e3 * 0.1 * 1e12, 1e-9);
}

TEST(Cli, DipScanPresetsGiveSameWidth) {
  auto dir = scratch("dip");
  auto c = defaults();
  RunOptions o = to(dir);
  o.presets = {"fiber-200m", "fiber-10km", "fiber-20km"};
  std::ostringstream log;
  auto r = run_command("dip-scan", &c, o, log);
  for (auto name : {"dip_fiber-200m.csv", "dip_fiber-10km.csv", "dip_fiber-20km.csv"}) {
    std::string header;
    auto d = rows(dir / name, &header);
    EXPECT_EQ(header, "delay_ps,probability,sampled_counts");
    EXPECT_EQ(d.size(), 201u);
  }
  auto s = rows(dir / "dip_summary.csv");
  ASSERT_EQ(s.size(), 3u);
  for (const auto& row : s) {
    EXPECT_NEAR(std::stod(row[2]), 3.25, 3.25 * 0.05) << row[0];
    EXPECT_NEAR(std::stod(row[1]), 0.60, 0.03) << row[0];
  }
}

TEST(Cli, UnequalArmsMoveTheDip) {
  auto dir = scratch("dip_unequal");
  auto c = defaults();
  c.signal_segments = {FiberSegment{200.0}};
  c.idler_segments = {FiberSegment{200.02}};  // 2 cm longer: ≈ 98 ps of extra delay
  std::ostringstream log;
  run_command("dip-scan", &c, to(dir), log);
  auto s = rows(dir / "dip_summary.csv");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(std::stod(s[0][3]), -97.5, 1.0);
  EXPECT_NEAR(std::stod(s[0][2]), 3.25, 0.2);
}

TEST(Cli, ByteIdenticalReruns) {
  auto c = defaults(99);
  c.duration_s = 2000.0;
  for (const std::string cmd : {"coincidence", "sync-run", "dip-scan"}) {
    auto a = scratch(cmd + "_a"), b = scratch(cmd + "_b");
    std::ostringstream log;
    auto ra = run_command(cmd, &c, to(a), log);
    auto rb = run_command(cmd, &c, to(b), log);
    ASSERT_EQ(ra.files, rb.files);
    for (const auto& f : ra.files) EXPECT_EQ(slurp(a / f), slurp(b / f)) << cmd << " " << f;
  }
}

TEST(Cli, EveryFileCarriesTheManifest) {
  auto dir = scratch("manifest");
  auto c = defaults(5);
  c.duration_s = 1000.0;
  std::ostringstream log;
  auto r = run_command("sync-run", &c, to(dir), log);
  std::set<std::string> on_disk;
  for (const auto& e : fs::directory_iterator(dir)) on_disk.insert(e.path().filename().string());
  std::set<std::string> listed(r.files.begin(), r.files.end());
  EXPECT_EQ(on_disk, listed);
  for (const auto& f : r.files) {
    if (f == "run_manifest.txt") continue;
    auto text = slurp(dir / f);
    EXPECT_EQ(text.rfind("# manifest run_manifest.txt command=sync-run config_hash=" + r.config_hash, 0), 0u) << f;
  }
  auto manifest = slurp(dir / "run_manifest.txt");
  EXPECT_NE(manifest.find("seed = 5"), std::string::npos);
  EXPECT_NE(manifest.find("file = offsets.csv"), std::string::npos);
  // The resolved config reproduces the hash.
  EXPECT_EQ(config_hash(load_config((dir / "resolved_config.cfg").string())), r.config_hash);
}

TEST(Cli, SyncRunThenTdevOnItsOffsets) {
  auto dir = scratch("sync_tdev");
  auto c = defaults(3);
  c.duration_s = 2000.0;
  std::ostringstream log;
  run_command("sync-run", &c, to(dir), log);
  std::string header;
  auto off = rows(dir / "offsets.csv", &header);
  EXPECT_EQ(header, "t_s,offset_ps,uncertainty_ps");
  EXPECT_EQ(off.size(), 20u);
  rows(dir / "residual.csv", &header);
  EXPECT_EQ(header, "t_s,residual_fs");

  RunOptions o = to((dir / "t"));
  o.input = (dir / "offsets.csv").string();
  run_command("tdev", nullptr, o, log);
  auto t = rows(dir / "t" / "tdev.csv", &header);
  EXPECT_EQ(header, "tau_s,tdev_s,n_samples");
  ASSERT_FALSE(t.empty());
  EXPECT_NEAR(std::stod(t[0][0]), 100.0, 1e-6);
  // Per-epoch white noise of order 1 ps.
  EXPECT_GT(std::stod(t[0][1]), 0.3e-12);
  EXPECT_LT(std::stod(t[0][1]), 5e-12);
}

TEST(Cli, PlanSegments) {
  auto dir = scratch("plan");
  auto c = defaults();
  std::ostringstream log;
  run_command("plan-segments", &c, to(dir), log);
  auto t = rows(dir / "plan.csv");
  ASSERT_EQ(t.size(), 10u);
  EXPECT_EQ(t[0][4], "false");
  EXPECT_EQ(t[1][4], "true");
  auto s = rows(dir / "plan_summary.csv");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0][1], "2");
  EXPECT_EQ(s[1][0], "config");
  EXPECT_NE(log.str().find("recommended: 2"), std::string::npos);
}

TEST(Cli, ErrorsCarryCategories) {
  auto c = defaults();
  std::ostringstream log;
  auto category = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.category();
    }
    ADD_FAILURE() << "no error";
    return ErrorCategory::domain;
  };
  EXPECT_EQ(category([&] { run_command("warp", &c, {}, log); }), ErrorCategory::config);
  EXPECT_EQ(category([&] { run_command("drift-map", nullptr, {}, log); }), ErrorCategory::config);
  EXPECT_EQ(category([&] { run_command("tdev", nullptr, to(scratch("none")), log); }), ErrorCategory::config);
  RunOptions bad = to(scratch("preset"));
  bad.presets = {"fiber-3km"};
  EXPECT_EQ(category([&] { run_command("drift-map", &c, bad, log); }), ErrorCategory::config);

  // Output path blocked by a regular file.
  auto blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  EXPECT_EQ(category([&] { run_command("drift-map", &c, to((blocker / "sub")), log); }), ErrorCategory::io);
  fs::remove(blocker);

  RunOptions t = to(scratch("tdev_missing"));
  t.input = "/nonexistent/offsets.csv";
  EXPECT_EQ(category([&] { run_command("tdev", nullptr, t, log); }), ErrorCategory::io);
  EXPECT_EQ(exit_code(ErrorCategory::io), 19);
}

TEST(Cli, NumberFormat) {
  EXPECT_EQ(fmt(2.28), "2.28000000000e+00");
  EXPECT_EQ(fmt(-5.03e-14), "-5.03000000000e-14");
}
