#pragma once

// Reference 1D variable-coefficient Helmholtz solver: second-order FDFD
// stencil, Dirichlet drive of amplitude omega at x = 0 and a first-order
// radiation row at x = L, solved as a tridiagonal system.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/fields.hpp"

namespace hdl {

using cplx = std::complex<double>;

/// Row j reads sub[j] u[j-1] + main[j] u[j] + super[j] u[j+1] = rhs[j].
/// sub[0] and super[n-1] are stored but never referenced.
struct BandedSystem {
  std::vector<cplx> sub, main, super, rhs;

  std::size_t size() const { return main.size(); }

  std::vector<cplx> apply(const std::vector<cplx>& u) const {
    const std::size_t n = size();
    std::vector<cplx> out(n);
    for (std::size_t j = 0; j < n; ++j) {
      cplx v = main[j] * u[j];
      if (j > 0) v += sub[j] * u[j - 1];
      if (j + 1 < n) v += super[j] * u[j + 1];
      out[j] = v;
    }
    return out;
  }

  /// ||A u - b||_inf / ||b||_inf (absolute when b = 0).
  double relative_residual(const std::vector<cplx>& u) const {
    const auto au = apply(u);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < size(); ++j) {
      num = std::max(num, std::abs(au[j] - rhs[j]));
      den = std::max(den, std::abs(rhs[j]));
    }
    return den > 0 ? num / den : num;
  }
};

struct Wavefield1D {
  std::vector<cplx> values;
  double omega = 0.0;
  double dx = 0.0;
};

inline BandedSystem assemble_1d(const CoefficientField& c, double omega) {
  const std::size_t n = c.values.size();
  require(c.shape.rank == 1 && n >= 3, "assemble_1d: need a 1D field with at least 3 points");
  require(std::isfinite(omega) && omega > 0, "assemble_1d: omega must be positive");
  require(c.dx > 0, "assemble_1d: grid spacing must be positive");
  for (double v : c.values) require(std::isfinite(v) && v > 0, "assemble_1d: sound speed must be positive");

  BandedSystem sys;
  sys.sub.assign(n, 0.0);
  sys.main.assign(n, 0.0);
  sys.super.assign(n, 0.0);
  sys.rhs.assign(n, 0.0);
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const double kdx = omega / c.values[j] * c.dx;
    sys.sub[j] = 1.0;
    sys.main[j] = -2.0 + kdx * kdx;
    sys.super[j] = 1.0;
  }
  sys.main[0] = 1.0;
  sys.super[0] = 0.0;
  sys.rhs[0] = omega;
  const double kdx_end = omega / c.values[n - 1] * c.dx;
  sys.main[n - 1] = cplx(-1.0, kdx_end);
  sys.sub[n - 1] = 1.0;
  return sys;
}

/// Tridiagonal elimination with partial pivoting (LAPACK gtsv ordering); row
/// swaps introduce one extra superdiagonal.
inline std::vector<cplx> solve_banded(const BandedSystem& sys) {
  const std::size_t n = sys.size();
  require(n >= 1 && sys.sub.size() == n && sys.super.size() == n && sys.rhs.size() == n,
          "solve_banded: diagonal lengths differ");
  constexpr double tiny = 1e-300;
  std::vector<cplx> d = sys.main, du = sys.super, dl(n, 0.0), du2(n, 0.0), b = sys.rhs;
  for (std::size_t i = 1; i < n; ++i) dl[i - 1] = sys.sub[i];

  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(d[i]) >= std::abs(dl[i])) {
      if (std::abs(d[i]) < tiny) throw Error(ErrorKind::singular_system, "zero pivot in banded solve");
      const cplx f = dl[i] / d[i];
      d[i + 1] -= f * du[i];
      b[i + 1] -= f * b[i];
      dl[i] = f;
    } else {
      const cplx f = d[i] / dl[i];
      d[i] = dl[i];
      const cplx tmp = d[i + 1];
      d[i + 1] = du[i] - f * tmp;
      if (i + 2 < n) {
        du2[i] = du[i + 1];
        du[i + 1] = -f * du2[i];
      }
      du[i] = tmp;
      std::swap(b[i], b[i + 1]);
      b[i + 1] -= f * b[i];
      dl[i] = f;
    }
  }
  if (std::abs(d[n - 1]) < tiny) throw Error(ErrorKind::singular_system, "zero pivot in banded solve");

  std::vector<cplx> x(n);
  x[n - 1] = b[n - 1] / d[n - 1];
  if (n >= 2) x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
  for (std::size_t k = n - 2; k-- > 0;) x[k] = (b[k] - du[k] * x[k + 1] - du2[k] * x[k + 2]) / d[k];
  return x;
}

inline constexpr double kResidualTolerance1D = 1e-10;

inline Wavefield1D solve_helmholtz_1d_omega(const CoefficientField& c, double omega) {
  const BandedSystem sys = assemble_1d(c, omega);
  Wavefield1D w;
  w.values = solve_banded(sys);
  w.omega = omega;
  w.dx = c.dx;
  for (const cplx& v : w.values)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw Error(ErrorKind::singular_system, "non-finite entry in 1D solution");
  const double res = sys.relative_residual(w.values);
  if (res > kResidualTolerance1D)
    throw Error(ErrorKind::singular_system,
                "1D residual " + std::to_string(res) + " exceeds tolerance");
  return w;
}

/// Solves at frequency `f_hz`, omega = 2 pi f.
inline Wavefield1D solve_helmholtz_1d(const CoefficientField& c, double f_hz) {
  require(std::isfinite(f_hz) && f_hz > 0, "solve_helmholtz_1d: frequency must be positive");
  return solve_helmholtz_1d_omega(c, 2.0 * std::numbers::pi * f_hz);
}

}  // namespace hdl
