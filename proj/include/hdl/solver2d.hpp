#pragma once

// Reference 2D variable-coefficient Helmholtz solver with a perfectly matched
// layer (complex coordinate stretching), assembled on the 5-point stencil in
// physical units and solved by sparse direct LU.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/fields.hpp"

namespace hdl {

struct PmlSpec {
  std::size_t thickness = 12;
  double sigma_max = 0.0;  // 1/s; see default_sigma_max
  int profile_power = 2;

  void validate() const {
    require(thickness >= 4, "PML thickness must be at least 4 points");
    require(std::isfinite(sigma_max) && sigma_max > 0, "PML sigma_max must be positive");
    require(profile_power == 2 || profile_power == 3, "PML profile power must be 2 or 3");
  }
};

/// sigma_max giving a nominal round-trip reflection `reflection` for a layer of
/// `thickness` points of spacing dx in a medium of speed c_ref.
inline double default_sigma_max(std::size_t thickness, double dx, double c_ref, int power = 2,
                                double reflection = 1e-6) {
  const double depth = double(thickness) * dx;
  return double(power + 1) * c_ref * std::log(1.0 / reflection) / (2.0 * depth);
}

struct Wavefield2D {
  GridShape shape;
  std::vector<std::complex<double>> values;
  double omega = 0.0;
  double dx = 0.0;
};

struct SparseSystem2D {
  GridShape shape;
  Eigen::SparseMatrix<std::complex<double>> matrix;
  Eigen::VectorXcd rhs;
  double omega = 0.0;
  double dx = 0.0;
};

namespace detail {

/// Absorption at fractional grid coordinate `pos` along an axis of n points.
inline double pml_sigma(double pos, std::size_t n, const PmlSpec& pml, bool enabled) {
  if (!enabled) return 0.0;
  const double t = double(pml.thickness);
  const double left = t - pos;
  const double right = pos - (double(n - 1) - t);
  const double depth = std::max({left, right, 0.0});
  return pml.sigma_max * std::pow(depth / t, pml.profile_power);
}

}  // namespace detail

/// Assembles  d/dx(sy/sx du/dx) + d/dy(sx/sy du/dy) + sx sy (omega/c)^2 u = amplitude * mask
/// with s(xi) = 1 + i sigma(xi)/omega and homogeneous Dirichlet data outside the grid.
/// A PmlSpec with sigma_max = 0 is accepted here and yields the plain stencil.
inline SparseSystem2D assemble_2d(const CoefficientField& c, double omega,
                                  const std::vector<double>& source_mask, const PmlSpec& pml,
                                  double amplitude = 1.0) {
  const GridShape& s = c.shape;
  require(s.rank == 2, "assemble_2d: need a 2D field");
  require(s.height >= 32 && s.width >= 32, "assemble_2d: grid must be at least 32x32");
  require(source_mask.size() == s.size(), "assemble_2d: source mask shape mismatch");
  require(std::isfinite(omega) && omega > 0, "assemble_2d: omega must be positive");
  require(c.dx > 0, "assemble_2d: grid spacing must be positive");
  require(std::isfinite(pml.sigma_max) && pml.sigma_max >= 0, "assemble_2d: bad sigma_max");
  require(2 * pml.thickness < s.height && 2 * pml.thickness < s.width, "assemble_2d: PML does not fit");
  for (double v : c.values) require(std::isfinite(v) && v > 0, "assemble_2d: sound speed must be positive");

  using C = std::complex<double>;
  const bool absorbing = pml.sigma_max > 0;
  const double inv_h2 = 1.0 / (c.dx * c.dx);
  auto stretch = [&](double pos, std::size_t n) {
    return C(1.0, detail::pml_sigma(pos, n, pml, absorbing) / omega);
  };

  std::vector<Eigen::Triplet<C>> trip;
  trip.reserve(5 * s.size());
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(Eigen::Index(s.size()));
  for (std::size_t r = 0; r < s.height; ++r) {
    const C sy = stretch(double(r), s.height);
    const C sy_up = stretch(double(r) - 0.5, s.height);
    const C sy_dn = stretch(double(r) + 0.5, s.height);
    for (std::size_t col = 0; col < s.width; ++col) {
      const C sx = stretch(double(col), s.width);
      const C sx_lf = stretch(double(col) - 0.5, s.width);
      const C sx_rt = stretch(double(col) + 0.5, s.width);
      const auto row = Eigen::Index(s.index(r, col));
      const C w_lf = sy / sx_lf * inv_h2, w_rt = sy / sx_rt * inv_h2;
      const C w_up = sx / sy_up * inv_h2, w_dn = sx / sy_dn * inv_h2;
      const double k = omega / c.values[s.index(r, col)];
      trip.emplace_back(row, row, -(w_lf + w_rt + w_up + w_dn) + sx * sy * k * k);
      if (col > 0) trip.emplace_back(row, Eigen::Index(s.index(r, col - 1)), w_lf);
      if (col + 1 < s.width) trip.emplace_back(row, Eigen::Index(s.index(r, col + 1)), w_rt);
      if (r > 0) trip.emplace_back(row, Eigen::Index(s.index(r - 1, col)), w_up);
      if (r + 1 < s.height) trip.emplace_back(row, Eigen::Index(s.index(r + 1, col)), w_dn);
      rhs[row] = amplitude * source_mask[s.index(r, col)] * sx * sy;
    }
  }
  SparseSystem2D sys;
  sys.shape = s;
  sys.matrix.resize(Eigen::Index(s.size()), Eigen::Index(s.size()));
  sys.matrix.setFromTriplets(trip.begin(), trip.end());
  sys.matrix.makeCompressed();
  sys.rhs = std::move(rhs);
  sys.omega = omega;
  sys.dx = c.dx;
  return sys;
}

/// Upper bound on LU storage under lexicographic ordering (band of half-width = grid width).
inline double lu_memory_estimate_bytes(const GridShape& s) {
  return double(s.size()) * double(2 * s.width + 1) * double(sizeof(std::complex<double>));
}

inline constexpr double kResidualTolerance2D = 1e-8;

inline Wavefield2D solve_2d(const SparseSystem2D& sys, double memory_cap_bytes = 2.0e9) {
  if (lu_memory_estimate_bytes(sys.shape) > memory_cap_bytes)
    throw Error(ErrorKind::resource_limit,
                "2D solve needs ~" + std::to_string(lu_memory_estimate_bytes(sys.shape) / 1e6) +
                    " MB, above the configured cap");
  Eigen::SparseLU<Eigen::SparseMatrix<std::complex<double>>, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(sys.matrix);
  lu.factorize(sys.matrix);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorKind::singular_system, "2D factorization failed: " + lu.lastErrorMessage());
  Eigen::VectorXcd u = lu.solve(sys.rhs);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::singular_system, "2D back-substitution failed");
  const double bnorm = sys.rhs.norm();
  const double res = (sys.matrix * u - sys.rhs).norm() / (bnorm > 0 ? bnorm : 1.0);
  if (!std::isfinite(res) || res > kResidualTolerance2D)
    throw Error(ErrorKind::singular_system, "2D residual " + std::to_string(res) + " exceeds tolerance");
  Wavefield2D w;
  w.shape = sys.shape;
  w.values.assign(u.data(), u.data() + u.size());
  w.omega = sys.omega;
  w.dx = sys.dx;
  return w;
}

/// max |u| over the outermost `frame` rows/columns divided by max |u| overall.
inline double boundary_frame_ratio(const Wavefield2D& w, std::size_t frame = 2) {
  double peak = 0.0, edge = 0.0;
  const GridShape& s = w.shape;
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t c = 0; c < s.width; ++c) {
      const double a = std::abs(w.values[s.index(r, c)]);
      peak = std::max(peak, a);
      const bool in_frame = r < frame || c < frame || r + frame >= s.height || c + frame >= s.width;
      if (in_frame) edge = std::max(edge, a);
    }
  return peak > 0 ? edge / peak : 0.0;
}

struct SigmaSweep {
  std::vector<double> sigma_max;
  std::vector<double> frame_ratio;
  std::size_t chosen = 0;
};

/// Solves with sigma_max = m * default_sigma_max for each multiplier and keeps
/// the smallest one whose boundary-frame ratio is at most `target`, falling
/// back to the best ratio seen.
inline SigmaSweep sweep_sigma_max(const CoefficientField& c, double omega, const std::vector<double>& source_mask,
                                  std::size_t thickness, double c_ref, const std::vector<double>& multipliers,
                                  double target = 1e-3) {
  require(!multipliers.empty() && std::is_sorted(multipliers.begin(), multipliers.end()),
          "sweep_sigma_max: multipliers must be nonempty and ascending");
  SigmaSweep out;
  const double base = default_sigma_max(thickness, c.dx, c_ref);
  bool found = false;
  for (double m : multipliers) {
    PmlSpec p;
    p.thickness = thickness;
    p.sigma_max = m * base;
    const double r = boundary_frame_ratio(solve_2d(assemble_2d(c, omega, source_mask, p)));
    out.sigma_max.push_back(p.sigma_max);
    out.frame_ratio.push_back(r);
    const std::size_t i = out.frame_ratio.size() - 1;
    if (!found && r <= target) {
      out.chosen = i;
      found = true;
    }
    if (!found && r < out.frame_ratio[out.chosen]) out.chosen = i;
  }
  return out;
}

}  // namespace hdl
