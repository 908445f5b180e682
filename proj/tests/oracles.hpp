#pragma once

// Reference computations shared by the unit tests and the acceptance runner.
// Each returns raw numbers; the callers decide thresholds.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hdl/config.hpp"
#include "hdl/diffusion.hpp"
#include "hdl/fields.hpp"
#include "hdl/metrics.hpp"
#include "hdl/nn.hpp"
#include "hdl/schedules.hpp"
#include "hdl/solver1d.hpp"
#include "hdl/solver2d.hpp"

namespace oracle {

using namespace hdl;

inline CoefficientField constant_line(std::size_t n, double c, double length = 1.0) {
  CoefficientField f;
  f.shape = GridShape::line(n);
  f.values.assign(n, c);
  f.dx = length / double(n - 1);
  return f;
}

inline CoefficientField constant_plane(std::size_t n, double c, double dx) {
  CoefficientField f;
  f.shape = GridShape::plane(n, n);
  f.values.assign(n * n, c);
  f.dx = dx;
  return f;
}

// ---------------------------------------------------------------------------
// 1D solver

/// Relative L2 distance between the FDFD solution and omega e^{ikx}.
inline double plane_wave_error(std::size_t n, double c, double f_hz) {
  const auto field = constant_line(n, c);
  const auto w = solve_helmholtz_1d(field, f_hz);
  const double k = w.omega / c;
  double num = 0, den = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const cplx exact = w.omega * std::exp(cplx(0, k * double(j) * field.dx));
    num += std::norm(w.values[j] - exact);
    den += std::norm(exact);
  }
  return std::sqrt(num / den);
}

struct Refinement {
  std::vector<std::size_t> points;
  std::vector<double> errors;
  std::vector<double> orders;  // log2(e_i / e_{i+1})
};

/// Constant medium on [0,1], starting at `n0` points and halving dx `levels`
/// times. The defaults are the desk setting: 128 points, background speed and
/// the lowest desk frequency.
inline Refinement refinement_study(std::size_t n0 = 128, int levels = 3, double c = GrfHyperParams{}.c_bg,
                                   double f_hz = desk_profile().frequencies.front()) {
  Refinement r;
  std::size_t n = n0;
  for (int i = 0; i <= levels; ++i, n = 2 * n - 1) {
    r.points.push_back(n);
    r.errors.push_back(plane_wave_error(n, c, f_hz));
  }
  for (std::size_t i = 1; i < r.errors.size(); ++i) r.orders.push_back(std::log2(r.errors[i - 1] / r.errors[i]));
  return r;
}

inline BandedSystem random_banded(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  BandedSystem s;
  for (auto* v : {&s.sub, &s.main, &s.super, &s.rhs}) {
    v->resize(n);
    for (auto& z : *v) z = cplx(u(rng), u(rng));
  }
  return s;
}

/// Worst max-norm relative gap between the banded solve and dense partial-pivot LU.
inline double banded_vs_dense(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  const std::size_t sizes[] = {2, 3, 5, 17, 64, 128, 257};
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t n = sizes[trial % std::size(sizes)];
    const auto s = random_banded(n, rng);
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(Eigen::Index(n), Eigen::Index(n));
    Eigen::VectorXcd b(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      const auto i = Eigen::Index(j);
      A(i, i) = s.main[j];
      if (j > 0) A(i, i - 1) = s.sub[j];
      if (j + 1 < n) A(i, i + 1) = s.super[j];
      b[i] = s.rhs[j];
    }
    const Eigen::VectorXcd ref = A.partialPivLu().solve(b);
    const auto x = solve_banded(s);
    double gap = 0;
    for (std::size_t j = 0; j < n; ++j) gap = std::max(gap, std::abs(x[j] - ref[Eigen::Index(j)]));
    worst = std::max(worst, gap / ref.cwiseAbs().maxCoeff());
  }
  return worst;
}

// ---------------------------------------------------------------------------
// 2D solver

struct PmlStudy {
  double interior_rel_l2 = 0.0;
  double frame_ratio = 0.0;
  double sigma_max = 0.0;
  SigmaSweep sweep;
};

/// Homogeneous medium on a 64x64 unit square at 16 points per wavelength with a
/// centered disk source of radius 4 cells and the default 12-point PML. sigma_max
/// comes from the efficacy sweep; the reference repeats the solve with dx/4
/// (same physical PML and disk) and is compared on the PML-free interior.
inline PmlStudy pml_study() {
  const std::size_t n = 64, thickness = 12, refine = 4;
  const double c = 1500.0, dx = 1.0 / double(n - 1), radius = 4.0;
  const double omega = 2.0 * std::numbers::pi * c / (16.0 * dx);
  const auto coarse = constant_plane(n, c, dx);
  const auto mask = disk_mask(coarse.shape, {n / 2, n / 2}, radius);

  PmlStudy out;
  out.sweep = sweep_sigma_max(coarse, omega, mask, thickness, c, {0.25, 0.5, 1.0, 2.0, 4.0, 8.0});
  out.sigma_max = out.sweep.sigma_max[out.sweep.chosen];
  out.frame_ratio = out.sweep.frame_ratio[out.sweep.chosen];

  PmlSpec p;
  p.thickness = thickness;
  p.sigma_max = out.sigma_max;
  const auto w = solve_2d(assemble_2d(coarse, omega, mask, p));

  const std::size_t nf = (n - 1) * refine + 1;
  const auto fine = constant_plane(nf, c, dx / double(refine));
  PmlSpec pf = p;
  pf.thickness = thickness * refine;
  const auto ref = solve_2d(
      assemble_2d(fine, omega, disk_mask(fine.shape, {n / 2 * refine, n / 2 * refine}, radius * refine), pf));

  double num = 0, den = 0;
  for (std::size_t r = thickness; r < n - thickness; ++r)
    for (std::size_t col = thickness; col < n - thickness; ++col) {
      const auto a = w.values[coarse.shape.index(r, col)];
      const auto b = ref.values[fine.shape.index(r * refine, col * refine)];
      num += std::norm(a - b);
      den += std::norm(b);
    }
  out.interior_rel_l2 = std::sqrt(num / den);
  return out;
}

// ---------------------------------------------------------------------------
// Network gradients

struct GroupGradientError {
  std::string group;
  double rel = 0.0;  // ||analytic - fd||_2 / ||fd||_2 over the group
};

inline nn::DenoiserConfig toy_config() {
  nn::DenoiserConfig c;
  c.in_channels = 3;
  c.length = 16;
  c.width = 4;
  c.blocks = 3;
  c.context_dim = 8;
  return c;
}

/// Central differences of an MSE loss on a toy network with all weights
/// randomized (so FiLM and the zero-initialized paths carry gradient).
inline std::vector<GroupGradientError> gradient_check(std::uint64_t seed, double h = 1e-5) {
  const auto cfg = toy_config();
  nn::DenoiserParams p = nn::init_params(cfg, seed);
  const nn::Denoiser net(cfg);
  Rng rng(derive_seed(seed, 99));
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : p.values) v += 0.1 * g(rng);
  const Eigen::Index B = 2, N = Eigen::Index(cfg.length);
  nn::Mat x(Eigen::Index(cfg.in_channels), N * B), target(1, N * B);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = g(rng);
  const std::vector<double> t{0.3, 0.71};

  nn::Tape tape;
  nn::Mat gout;
  nn::mse_loss(net.forward(p.values, x, t, &tape), target, &gout);
  nn::ParamVec grad(p.values.size(), 0.0);
  net.backward(p.values, tape, gout, grad);

  std::vector<GroupGradientError> out;
  nn::ParamVec w = p.values;
  for (const auto& grp : net.layout().groups) {
    double num = 0, den = 0;
    for (std::size_t i = grp.offset; i < grp.offset + grp.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + h;
      const double lp = nn::mse_loss(net.forward(w, x, t), target);
      w[i] = keep - h;
      const double lm = nn::mse_loss(net.forward(w, x, t), target);
      w[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      num += (fd - grad[i]) * (fd - grad[i]);
      den += fd * fd;
    }
    out.push_back({grp.name, den > 0 ? std::sqrt(num / den) : std::sqrt(num)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Samplers with an exact denoiser

/// eps predictor that is optimal when the data distribution is a point mass at u*.
inline EpsFn point_mass_eps(const Vec& u_star, Eigen::Index batch) {
  return [u_star, batch](const Mat& x, const NoiseLevel& lv) {
    Mat e(1, x.cols());
    const double a = std::sqrt(lv.alpha_bar), s = std::sqrt(std::max(1e-300, 1.0 - lv.alpha_bar));
    for (Eigen::Index n = 0; n < u_star.size(); ++n)
      for (Eigen::Index b = 0; b < batch; ++b) e(0, n * batch + b) = (x(0, n * batch + b) - a * u_star[n]) / s;
    return e;
  };
}

inline Vec oracle_target(Eigen::Index n = 64) {
  Vec u(n);
  for (Eigen::Index i = 0; i < n; ++i) u[i] = std::sin(0.3 * double(i)) + 0.2 * std::cos(1.7 * double(i));
  return u;
}

/// Mean over `samples` draws of the relative L2 error to u*.
inline double oracle_sampler_error(SamplerKind kind, int steps, std::size_t samples = 10, double eta = 0.0,
                                   std::uint64_t seed = 5) {
  const Vec u = oracle_target();
  const Eigen::Index B = Eigen::Index(samples);
  std::vector<Rng> rngs;
  for (std::size_t s = 0; s < samples; ++s) rngs.emplace_back(derive_seed(seed, s));
  SampleConfig cfg;
  cfg.sampler = kind;
  cfg.schedule = ScheduleKind::cosine;
  cfg.steps = steps;
  cfg.eta = eta;
  const Mat x = run_sampler(cfg, point_mass_eps(u, B), u.size(), rngs, std::numeric_limits<double>::infinity());
  const std::vector<double> truth(u.data(), u.data() + u.size());
  double acc = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const Vec v = detail::unpack_row(x, b, B);
    acc += metrics::rel_l2(std::vector<double>(v.data(), v.data() + v.size()), truth);
  }
  return acc / double(samples);
}

// ---------------------------------------------------------------------------
// Schedules

/// Largest |mu(k/T)^2 - abar_k| over k = 0..T.
inline double continuous_mismatch(ScheduleKind kind, int T) {
  const auto s = make_schedule(kind, T);
  double worst = 0;
  for (int k = 0; k <= T; ++k) {
    const double mu = vp_scalings(double(k) / T, s).mu;
    worst = std::max(worst, std::abs(mu * mu - s.alpha_bar(k)));
  }
  return worst;
}

/// Worst z-score of the Monte-Carlo mean and variance of u_t against
/// sqrt(abar) u0 and 1 - abar, over several steps and both schedules.
inline double forward_moment_zscore(std::size_t draws = 20000, std::uint64_t seed = 3) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::vector<double> u0{0.7, -1.3};
  double worst = 0;
  for (ScheduleKind kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    const auto s = make_schedule(kind, 1000);
    for (int t : {1, 10, 250, 500, 900, 1000}) {
      const double ab = s.alpha_bar(t);
      for (std::size_t i = 0; i < u0.size(); ++i) {
        double m = 0, m2 = 0;
        std::vector<double> e(draws);
        for (auto& v : e) v = g(rng);
        for (double ei : e) {
          const double ut = forward_marginal(std::span(&u0[i], 1), t, std::span(&ei, 1), s)[0];
          m += ut;
          m2 += ut * ut;
        }
        const double n = double(draws);
        m /= n;
        const double var = m2 / n - m * m;
        const double want_var = 1.0 - ab;
        const double z_mean = std::abs(m - std::sqrt(ab) * u0[i]) / std::sqrt(want_var / n);
        const double z_var = std::abs(var - want_var) / (want_var * std::sqrt(2.0 / (n - 1)));
        worst = std::max({worst, z_mean, z_var});
      }
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Spectra

/// Largest relative Parseval gap sum|F|^2 / N^d vs sum|u|^2 over random fields.
inline double parseval_gap(std::uint64_t seed = 11) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0;
  for (GridShape s : {GridShape::line(128), GridShape::line(77), GridShape::plane(32, 48)}) {
    std::vector<double> u(s.size());
    for (auto& v : u) v = g(rng);
    const auto p = metrics::power_spectrum(u, s);
    double lhs = 0, rhs = 0;
    for (double v : p) lhs += v;
    for (double v : u) rhs += v * v;
    lhs /= double(s.size());
    worst = std::max(worst, std::abs(lhs - rhs) / rhs);
  }
  return worst;
}

/// Worst relative gap between the radially averaged empirical power |U_k|^2 / 2
/// of `draws` fixed-hyperparameter realizations and the radially averaged
/// lambda(K)^2, over mid-band shells 0.1 <= |K| < 0.4 cycles per sample.
inline double grf_midband_gap(std::size_t draws = 500, std::size_t n = 64, std::uint64_t seed = 17) {
  const GridShape s = GridShape::plane(n, n);
  const auto kgrid = wavenumber_grid(s);
  const auto env = spectral_envelope(kgrid, 1.5, 3.0);
  const std::size_t hw = fft::half_width(s);
  const std::size_t shells = 20;
  std::vector<double> emp(shells, 0.0), ref(shells, 0.0), cnt(shells, 0.0);
  Rng rng(seed);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto u = grf_realization(s, env, rng);
    const auto U = fft::rfft(u, s);
    for (std::size_t i = 0; i < U.size(); ++i) {
      const std::size_t col = i % hw;
      if (col == 0 || (n % 2 == 0 && col == hw - 1)) continue;  // self-conjugate columns carry one real dof
      const double k = kgrid[i];
      if (k < 0.1 || k >= 0.4) continue;
      const auto b = std::size_t((k - 0.1) / 0.3 * double(shells));
      emp[b] += std::norm(U[i]) / 2.0;
      ref[b] += env[i] * env[i];
      cnt[b] += 1.0;
    }
  }
  double worst = 0;
  for (std::size_t b = 0; b < shells; ++b)
    if (cnt[b] > 0) worst = std::max(worst, std::abs(emp[b] - ref[b]) / ref[b]);
  return worst;
}

/// Counts fields outside (c_min, c_max) among `count` accepted draws.
inline std::size_t grf_out_of_bounds(std::size_t count = 10000, std::uint64_t seed = 23) {
  const GrfHyperParams hp;
  const GridShape s = GridShape::line(128);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto f = sample_grf(s, hp, derive_seed(seed, i), 1.0 / 127.0);
    for (double v : f.values)
      if (!(v > hp.c_min && v < hp.c_max)) {
        ++bad;
        break;
      }
  }
  return bad;
}

}  // namespace oracle
