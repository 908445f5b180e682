#pragma once

// Coefficient-space sensitivity: linear homotopies c(s) = (1-s) c0 + s c_d
// probed at fixed grid points, kernel density estimates across directions,
// domain-averaged directional variance, and the high-frequency phase scaling
// of relative wavefield perturbations.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <functional>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/fields.hpp"
#include "hdl/solver1d.hpp"

namespace hdl::sensitivity {

using cplx = std::complex<double>;

enum class ProbeTag { near, far };

inline const char* to_string(ProbeTag t) { return t == ProbeTag::near ? "near" : "far"; }

struct Probe {
  GridIndex at;
  ProbeTag tag = ProbeTag::near;
};

struct HomotopyStudy {
  CoefficientField c0;
  std::vector<CoefficientField> directions;
  std::vector<double> s_grid;
  std::vector<Probe> probes;

  void validate() const {
    require(!directions.empty(), "homotopy: need at least one direction");
    for (const auto& d : directions)
      require(d.shape == c0.shape && d.values.size() == c0.values.size(), "homotopy: direction shape mismatch");
    require(s_grid.size() >= 2 && std::is_sorted(s_grid.begin(), s_grid.end()), "homotopy: s grid must be sorted");
    require(s_grid.front() == 0.0 && s_grid.back() == 1.0, "homotopy: s grid must include 0 and 1");
    for (const auto& p : probes)
      require(p.at.col < c0.shape.width && (c0.shape.rank == 1 || p.at.row < c0.shape.height),
              "homotopy: probe out of bounds");
  }
};

inline std::vector<double> uniform_s_grid(std::size_t count) {
  require(count >= 2, "s grid needs at least two points");
  std::vector<double> s(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = double(i) / double(count - 1);
  s.back() = 1.0;
  return s;
}

/// (1 - s) c0 + s c_d, with exact endpoints.
inline CoefficientField interpolate(const CoefficientField& c0, const CoefficientField& cd, double s) {
  CoefficientField out = c0;
  if (s == 0.0) return out;
  if (s == 1.0) {
    out.values = cd.values;
    return out;
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = (1.0 - s) * c0.values[i] + s * cd.values[i];
  return out;
}

/// Four probes near x = 0 and four near the right end of a 1D grid.
inline std::vector<Probe> default_probes_1d(std::size_t n) {
  require(n >= 16, "default_probes_1d: grid too small");
  std::vector<Probe> p;
  for (std::size_t i : {2, 3, 4, 5}) p.push_back({{0, i}, ProbeTag::near});
  for (std::size_t i : {n - 8, n - 6, n - 4, n - 2}) p.push_back({{0, i}, ProbeTag::far});
  return p;
}

/// Near: four points 1.5 r_s from the source center; far: four points a few
/// cells inside the PML interface along the diagonals.
inline std::vector<Probe> default_probes_2d(const GridShape& s, GridIndex source, double radius,
                                            std::size_t pml_thickness) {
  std::vector<Probe> p;
  const auto off = std::size_t(std::ceil(1.5 * std::max(radius, 1.0)));
  p.push_back({{source.row - off, source.col}, ProbeTag::near});
  p.push_back({{source.row + off, source.col}, ProbeTag::near});
  p.push_back({{source.row, source.col - off}, ProbeTag::near});
  p.push_back({{source.row, source.col + off}, ProbeTag::near});
  const std::size_t in = pml_thickness + 4;
  p.push_back({{in, in}, ProbeTag::far});
  p.push_back({{in, s.width - 1 - in}, ProbeTag::far});
  p.push_back({{s.height - 1 - in, in}, ProbeTag::far});
  p.push_back({{s.height - 1 - in, s.width - 1 - in}, ProbeTag::far});
  return p;
}

// ---------------------------------------------------------------------------
// Kernel density estimation

struct Kde {
  bool degenerate = false;  // all values identical: a spike at `spike_at`
  double spike_at = 0.0;
  double bandwidth = 0.0;
  std::vector<double> grid;
  std::vector<double> density;

  double integral() const {
    if (degenerate) return 1.0;
    double acc = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
      acc += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
    return acc;
  }
};

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(std::vector<double> values) {
  require(values.size() >= 2, "silverman_bandwidth: need at least two values");
  const double n = double(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = iqr > 0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

struct KdeOptions {
  std::optional<double> bandwidth;  // Silverman when empty
  double span_bandwidths = 4.0;     // grid covers [min - span h, max + span h]
  std::size_t grid_points = 512;
};

inline Kde kde(const std::vector<double>& values, const KdeOptions& opt = {}) {
  require(values.size() >= 2, "kde: need at least two values");
  for (double v : values) require(std::isfinite(v), "kde: non-finite value");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  Kde out;
  if (hi - lo <= 1e-14 * std::max(1.0, std::abs(lo))) {
    out.degenerate = true;
    out.spike_at = values.front();
    return out;
  }
  const double h = opt.bandwidth ? *opt.bandwidth : silverman_bandwidth(values);
  require(h > 0 && std::isfinite(h), "kde: bandwidth must be positive");
  out.bandwidth = h;
  const double a = lo - opt.span_bandwidths * h, b = hi + opt.span_bandwidths * h;
  const std::size_t m = std::max<std::size_t>(opt.grid_points, 16);
  out.grid.resize(m);
  out.density.assign(m, 0.0);
  const double norm = 1.0 / (double(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < m; ++i) {
    const double x = a + (b - a) * double(i) / double(m - 1);
    out.grid[i] = x;
    double acc = 0.0;
    for (double v : values) {
      const double z = (x - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out.density[i] = acc * norm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Homotopy runner

/// Maps a coefficient field to a complex wavefield on the same grid. The
/// direction and s indices let stochastic evaluators derive per-call seeds.
using Evaluator = std::function<std::vector<cplx>(const CoefficientField&, std::size_t direction, std::size_t s_index)>;

struct SensitivityReport {
  std::vector<double> s_grid;
  std::vector<Probe> probes;
  /// responses[d][s][p] = |u| at probe p.
  std::vector<std::vector<std::vector<double>>> responses;
  std::vector<std::vector<std::vector<cplx>>> complex_responses;
  /// kde[s][p] across directions.
  std::vector<std::vector<Kde>> kde;
  /// Per-s variance of |u| across directions, averaged over the grid.
  std::vector<double> variance_vs_s;
  std::string bandwidth_rule = "silverman";

  double response(std::size_t d, std::size_t s, std::size_t p) const { return responses[d][s][p]; }
};

struct Failure {
  std::size_t direction = 0, s_index = 0;
  std::string message;
};

class PartialReportError : public Error {
 public:
  PartialReportError(SensitivityReport partial, std::vector<Failure> failures)
      : Error(ErrorKind::partial_report, describe(failures)),
        partial_(std::move(partial)),
        failures_(std::move(failures)) {}

  const SensitivityReport& partial() const { return partial_; }
  const std::vector<Failure>& failures() const { return failures_; }

 private:
  static std::string describe(const std::vector<Failure>& f) {
    std::ostringstream os;
    os << f.size() << " evaluator failure(s)";
    for (std::size_t i = 0; i < std::min<std::size_t>(f.size(), 5); ++i)
      os << "; (d=" << f[i].direction << ", s=" << f[i].s_index << "): " << f[i].message;
    return os.str();
  }
  SensitivityReport partial_;
  std::vector<Failure> failures_;
};

struct RunOptions {
  std::size_t threads = 1;
  KdeOptions kde;
};

inline SensitivityReport run_homotopy(const HomotopyStudy& study, const Evaluator& evaluator,
                                      const RunOptions& opt = {}) {
  study.validate();
  const std::size_t D = study.directions.size(), S = study.s_grid.size(), P = study.probes.size();
  const GridShape& shape = study.c0.shape;
  SensitivityReport rep;
  rep.s_grid = study.s_grid;
  rep.probes = study.probes;
  rep.responses.assign(D, std::vector<std::vector<double>>(S, std::vector<double>(P, 0.0)));
  rep.complex_responses.assign(D, std::vector<std::vector<cplx>>(S, std::vector<cplx>(P)));
  rep.variance_vs_s.assign(S, 0.0);
  rep.kde.assign(S, std::vector<Kde>(P));

  std::vector<Failure> failures;
  std::mutex failure_mutex;
  for (std::size_t si = 0; si < S; ++si) {
    std::vector<std::vector<double>> amp(D);
    std::vector<char> ok(D, 0);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t d; (d = next.fetch_add(1)) < D;) {
        try {
          const auto c = interpolate(study.c0, study.directions[d], study.s_grid[si]);
          const auto u = evaluator(c, d, si);
          if (u.size() != shape.size()) throw Error(ErrorKind::invalid_argument, "evaluator returned wrong shape");
          amp[d].resize(u.size());
          for (std::size_t i = 0; i < u.size(); ++i) amp[d][i] = std::abs(u[i]);
          for (std::size_t p = 0; p < P; ++p) {
            const cplx v = u[shape.index(study.probes[p].at.row, study.probes[p].at.col)];
            rep.complex_responses[d][si][p] = v;
            rep.responses[d][si][p] = std::abs(v);
          }
          ok[d] = 1;
        } catch (const std::exception& e) {
          std::lock_guard lock(failure_mutex);
          failures.push_back({d, si, e.what()});
        }
      }
    };
    const std::size_t nt = std::max<std::size_t>(1, std::min(opt.threads, D));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < nt; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();

    // Reduction in direction order keeps the result independent of thread count.
    std::size_t good = 0;
    for (std::size_t d = 0; d < D; ++d) good += ok[d];
    if (good >= 2) {
      double total = 0.0;
      const std::size_t ref = std::size_t(std::find(ok.begin(), ok.end(), 1) - ok.begin());
      for (std::size_t i = 0; i < shape.size(); ++i) {
        // Shifted by one member so identical responses give exactly zero.
        const double a0 = amp[ref][i];
        double mean = 0.0;
        for (std::size_t d = 0; d < D; ++d)
          if (ok[d]) mean += amp[d][i] - a0;
        mean /= double(good);
        double var = 0.0;
        for (std::size_t d = 0; d < D; ++d)
          if (ok[d]) var += (amp[d][i] - a0 - mean) * (amp[d][i] - a0 - mean);
        total += var / double(good);
      }
      rep.variance_vs_s[si] = total / double(shape.size());
      for (std::size_t p = 0; p < P; ++p) {
        std::vector<double> vals;
        for (std::size_t d = 0; d < D; ++d)
          if (ok[d]) vals.push_back(rep.responses[d][si][p]);
        rep.kde[si][p] = kde(vals, opt.kde);
      }
    }
  }
  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end(), [](const Failure& a, const Failure& b) {
      return a.s_index != b.s_index ? a.s_index < b.s_index : a.direction < b.direction;
    });
    throw PartialReportError(std::move(rep), std::move(failures));
  }
  return rep;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = double(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

// ---------------------------------------------------------------------------
// High-frequency scaling check

struct LinearFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_line: need at least two points");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0, "fit_line: degenerate abscissa");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

struct WkbPoint {
  double frequency = 0.0, omega = 0.0;
  std::size_t probe = 0;
  ProbeTag tag = ProbeTag::near;
  double x = 0.0;          // distance from the source
  double rel_change = 0.0; // |du / u0|
  double bound_factor = 0.0; // (omega x / c0) (||dc||_inf / c0)
};

struct WkbReport {
  std::vector<WkbPoint> points;
  std::vector<std::string> notices;  // skipped probes
  LinearFit fit_vs_kx;               // pooled |du/u0| against omega x / c0
  std::vector<LinearFit> fit_vs_k;   // per probe, |du/u0| against omega
  double c_fit = 0.0;                // bound constant calibrated on the calibration frequencies
  bool certified = false;            // bound with c_fit holds at every point and frequency
  std::size_t calibration_count = 0;
};

/// Solves the 1D reference problem for c0 and c0 + dc at each frequency and
/// relates |du/u0| at the probes to the phase-accumulation factor. The bound
/// constant is fitted on the lowest `calibration` frequencies and then checked
/// on all of them.
inline WkbReport wkb_check(const std::vector<double>& frequencies, const CoefficientField& c0,
                           const std::vector<double>& delta_c, const std::vector<Probe>& probes,
                           std::size_t calibration = 3) {
  require(!frequencies.empty(), "wkb_check: no frequencies");
  require(delta_c.size() == c0.values.size(), "wkb_check: perturbation shape mismatch");
  require(c0.shape.rank == 1, "wkb_check: uses the 1D reference solver");
  double c_ref = 0.0, dc_inf = 0.0, c_inf = 0.0;
  for (std::size_t i = 0; i < delta_c.size(); ++i) {
    c_ref += c0.values[i];
    dc_inf = std::max(dc_inf, std::abs(delta_c[i]));
    c_inf = std::max(c_inf, std::abs(c0.values[i]));
  }
  c_ref /= double(delta_c.size());
  require(dc_inf <= 0.01 * c_inf + 1e-300, "wkb_check: perturbation must be at most 1% of c0");
  CoefficientField c1 = c0;
  for (std::size_t i = 0; i < delta_c.size(); ++i) c1.values[i] += delta_c[i];

  WkbReport rep;
  rep.calibration_count = std::min(calibration, frequencies.size());
  std::vector<std::vector<double>> per_probe_k(probes.size()), per_probe_y(probes.size());
  for (double f : frequencies) {
    const auto u0 = solve_helmholtz_1d(c0, f);
    const auto u1 = solve_helmholtz_1d(c1, f);
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const std::size_t j = probes[p].at.col;
      const double a0 = std::abs(u0.values[j]);
      if (a0 < 1e-12) {
        rep.notices.push_back("probe " + std::to_string(p) + " skipped at f=" + std::to_string(f) +
                              ": |u0| below 1e-12");
        continue;
      }
      WkbPoint pt;
      pt.frequency = f;
      pt.omega = u0.omega;
      pt.probe = p;
      pt.tag = probes[p].tag;
      pt.x = double(j) * c0.dx;
      pt.rel_change = std::abs(u1.values[j] - u0.values[j]) / a0;
      pt.bound_factor = (u0.omega * pt.x / c_ref) * (dc_inf / c_ref);
      rep.points.push_back(pt);
      per_probe_k[p].push_back(u0.omega);
      per_probe_y[p].push_back(pt.rel_change);
    }
  }
  std::vector<double> xs, ys;
  for (const auto& pt : rep.points) {
    xs.push_back(pt.omega * pt.x / c_ref);
    ys.push_back(pt.rel_change);
  }
  if (xs.size() >= 2) rep.fit_vs_kx = fit_line(xs, ys);
  for (std::size_t p = 0; p < probes.size(); ++p)
    rep.fit_vs_k.push_back(per_probe_k[p].size() >= 2 ? fit_line(per_probe_k[p], per_probe_y[p]) : LinearFit{});

  const double f_cal = rep.calibration_count ? frequencies[rep.calibration_count - 1] : 0.0;
  for (const auto& pt : rep.points)
    if (pt.frequency <= f_cal && pt.bound_factor > 0) rep.c_fit = std::max(rep.c_fit, pt.rel_change / pt.bound_factor);
  rep.certified = dc_inf > 0 ? rep.c_fit > 0 : true;
  for (const auto& pt : rep.points)
    if (pt.rel_change > rep.c_fit * pt.bound_factor * (1.0 + 1e-12) + 1e-15) rep.certified = false;
  return rep;
}

/// u0 exp(-v/2): the MSE-optimal deterministic prediction under a Gaussian
/// phase perturbation of variance v.
template <class T>
std::vector<T> phase_collapse_demo(const std::vector<T>& u0, double phase_variance) {
  require(phase_variance >= 0, "phase_collapse_demo: variance must be non-negative");
  const double a = std::exp(-0.5 * phase_variance);
  std::vector<T> out(u0);
  for (auto& v : out) v *= a;
  return out;
}

}  // namespace hdl::sensitivity
