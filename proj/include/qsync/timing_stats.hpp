#pragma once

// Time deviation of offset series.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qsync/error.hpp"

namespace qsync {

struct OffsetSeries {
  std::vector<double> times;          // epoch times [s]
  std::vector<double> offsets;        // [s]
  std::vector<double> uncertainties;  // [s], empty or one per epoch

  std::size_t size() const { return offsets.size(); }

  double tau0() const { return times.size() < 2 ? 0.0 : (times.back() - times.front()) / double(times.size() - 1); }

  void validate() const {
    if (offsets.size() < 4)
      fail(ErrorCategory::validation, "offset series needs at least 4 epochs (got " + std::to_string(offsets.size()) + ")");
    if (times.size() != offsets.size())
      fail(ErrorCategory::validation, "offset series: times and offsets differ in length");
    if (!uncertainties.empty() && uncertainties.size() != offsets.size())
      fail(ErrorCategory::validation, "offset series: uncertainties must be empty or match offsets");
    for (std::size_t i = 0; i < offsets.size(); ++i)
      if (!std::isfinite(times[i]) || !std::isfinite(offsets[i]))
        fail(ErrorCategory::validation, "offset series: non-finite value at epoch " + std::to_string(i));
    const double t0 = tau0();
    if (!(t0 > 0)) fail(ErrorCategory::validation, "offset series: epoch times must increase");
    for (std::size_t i = 1; i < times.size(); ++i) {
      double step = times[i] - times[i - 1];
      if (std::abs(step - t0) > 1e-6 * t0) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "offset series: non-uniform spacing at epoch %zu (step %.6g s, expected %.6g s); "
                      "gaps are not interpolated, split the series into uniform segments",
                      i, step, t0);
        fail(ErrorCategory::validation, buf);
      }
    }
  }
};

struct TdevResult {
  std::vector<double> taus;
  std::vector<double> tdev;
  std::vector<std::size_t> sample_counts;
  std::vector<std::size_t> rejected_m;  // averaging factors with 3m > N
};

enum class TdevEstimator { overlapping, non_overlapping };

/// Powers of two while 3m ≤ n.
inline std::vector<std::size_t> default_m_ladder(std::size_t n) {
  std::vector<std::size_t> ms;
  for (std::size_t m = 1; 3 * m <= n; m *= 2) ms.push_back(m);
  return ms;
}

/// TDEV of raw phase samples `x` spaced by `tau0`. The overlapping estimator uses every
/// start index; the non-overlapping one steps the start by m.
inline TdevResult tdev(std::span<const double> x, double tau0, std::span<const std::size_t> m_values,
                       TdevEstimator estimator = TdevEstimator::overlapping) {
  if (!(tau0 > 0)) fail(ErrorCategory::precondition, "tdev: tau0 must be positive");
  const std::size_t n = x.size();
  TdevResult r;
  std::vector<double> d;
  for (std::size_t m : m_values) {
    if (m == 0 || 3 * m > n) {
      r.rejected_m.push_back(m);
      continue;
    }
    if (!r.taus.empty() && m * tau0 <= r.taus.back())
      fail(ErrorCategory::precondition, "tdev: averaging factors must be strictly increasing");
    const std::size_t terms = n - 3 * m + 1;
    d.resize(n - 2 * m);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (x[i + 2 * m] - x[i + m]) - (x[i + m] - x[i]);

    const std::size_t stride = estimator == TdevEstimator::overlapping ? 1 : m;
    long double acc = 0.0L;
    std::size_t count = 0;
    long double window = 0.0L;
    for (std::size_t i = 0; i < m; ++i) window += d[i];
    for (std::size_t j = 0; j < terms; ++j) {
      if (j > 0) {
        // Re-sum periodically so long slides do not accumulate rounding.
        if (j % 4096 == 0) {
          window = 0.0L;
          for (std::size_t i = j; i < j + m; ++i) window += d[i];
        } else {
          window += (long double)d[j + m - 1] - (long double)d[j - 1];
        }
      }
      if (j % stride == 0) {
        acc += window * window;
        ++count;
      }
    }
    double md = double(m);
    r.taus.push_back(md * tau0);
    r.tdev.push_back(std::sqrt(double(acc / count) / (6.0 * md * md)));
    r.sample_counts.push_back(count);
  }
  return r;
}

inline TdevResult tdev(const OffsetSeries& s, std::span<const std::size_t> m_values,
                       TdevEstimator estimator = TdevEstimator::overlapping) {
  s.validate();
  return tdev(s.offsets, s.tau0(), m_values, estimator);
}

inline TdevResult tdev(const OffsetSeries& s, TdevEstimator estimator = TdevEstimator::overlapping) {
  s.validate();
  auto ms = default_m_ladder(s.size());
  return tdev(s.offsets, s.tau0(), ms, estimator);
}

/// Lossless CSV (t_s, offset_s[, uncertainty_s]).
inline void write_offset_series_csv(const OffsetSeries& s, std::ostream& out) {
  bool unc = !s.uncertainties.empty();
  out << (unc ? "t_s,offset_s,uncertainty_s\n" : "t_s,offset_s\n");
  char buf[96];
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (unc)
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.times[i], s.offsets[i], s.uncertainties[i]);
    else
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.times[i], s.offsets[i]);
    out << buf;
  }
}

inline void write_offset_series_csv(const OffsetSeries& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path);
  write_offset_series_csv(s, out);
}

/// Reads t_s plus one of offset_s / offset_ps (optional uncertainty_s / uncertainty_ps).
/// Lines starting with '#' are comments.
inline OffsetSeries read_offset_series_csv(std::istream& in, const std::string& name = "input") {
  OffsetSeries s;
  std::string line;
  int line_no = 0;
  int t_col = -1, x_col = -1, u_col = -1;
  double x_scale = 1.0, u_scale = 1.0;
  std::size_t ncols = 0;
  auto where = [&] { return name + ": line " + std::to_string(line_no) + ": "; };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (ncols == 0) {
      ncols = cells.size();
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (c == "t_s") t_col = int(i);
        else if (c == "offset_s") x_col = int(i);
        else if (c == "offset_ps") x_col = int(i), x_scale = 1e-12;
        else if (c == "uncertainty_s") u_col = int(i);
        else if (c == "uncertainty_ps") u_col = int(i), u_scale = 1e-12;
      }
      if (t_col < 0 || x_col < 0) fail(ErrorCategory::parse, where() + "header must name t_s and offset_s (or offset_ps)");
      continue;
    }
    if (cells.size() != ncols)
      fail(ErrorCategory::parse, where() + "expected " + std::to_string(ncols) + " columns, got " + std::to_string(cells.size()));
    auto num = [&](int col) {
      const std::string& c = cells[std::size_t(col)];
      char* end = nullptr;
      double v = std::strtod(c.c_str(), &end);
      if (c.empty() || *end != '\0' || !std::isfinite(v)) fail(ErrorCategory::parse, where() + "bad number '" + c + "'");
      return v;
    };
    s.times.push_back(num(t_col));
    s.offsets.push_back(num(x_col) * x_scale);
    if (u_col >= 0) s.uncertainties.push_back(num(u_col) * u_scale);
  }
  s.validate();
  return s;
}

inline OffsetSeries read_offset_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path);
  return read_offset_series_csv(in, path);
}

inline TdevResult tdev_from_csv(const std::string& path) { return tdev(read_offset_series_csv(path)); }

}  // namespace qsync
