#pragma once

// Relative error norms, the discrete wave energy, and DFT power spectra.
// Discrete gradients are forward differences with circular wrap on the last
// point of each axis.

#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/fft.hpp"
#include "hdl/grid.hpp"

namespace hdl::metrics {

namespace detail {

template <class T>
double abs2(const T& v) {
  return std::norm(v);
}

inline double cell_measure(const GridShape& s, double dx) { return s.rank == 1 ? dx : dx * dx; }

/// sum |Dv|^2 over all axes, forward differences with circular wrap.
template <class T>
double gradient_sq(const std::vector<T>& v, const GridShape& s, double dx) {
  double acc = 0.0;
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t c = 0; c < s.width; ++c) {
      const T here = v[s.index(r, c)];
      acc += abs2((v[s.index(r, (c + 1) % s.width)] - here) / dx);
      if (s.rank == 2) acc += abs2((v[s.index((r + 1) % s.height, c)] - here) / dx);
    }
  return acc;
}

template <class T>
double h1_sq(const std::vector<T>& v, const GridShape& s, double dx) {
  double acc = 0.0;
  for (const T& x : v) acc += abs2(x);
  return (acc + gradient_sq(v, s, dx)) * cell_measure(s, dx);
}

template <class T>
std::vector<T> difference(const std::vector<T>& a, const std::vector<T>& b) {
  require(a.size() == b.size(), "metrics: shape mismatch");
  std::vector<T> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

}  // namespace detail

template <class T>
double l2_norm(const std::vector<T>& v) {
  double acc = 0.0;
  for (const T& x : v) acc += detail::abs2(x);
  return std::sqrt(acc);
}

template <class T>
double rel_l2(const std::vector<T>& pred, const std::vector<T>& truth) {
  require(pred.size() == truth.size(), "rel_l2: shape mismatch");
  const double den = l2_norm(truth);
  require(den > 0, "rel_l2: truth has zero norm");
  return l2_norm(detail::difference(pred, truth)) / den;
}

template <class T>
double rel_h1(const std::vector<T>& pred, const std::vector<T>& truth, const GridShape& shape, double dx) {
  require(pred.size() == shape.size() && truth.size() == shape.size(), "rel_h1: shape mismatch");
  require(dx > 0, "rel_h1: spacing must be positive");
  const double den = detail::h1_sq(truth, shape, dx);
  require(den > 0, "rel_h1: truth has zero H1 norm");
  return std::sqrt(detail::h1_sq(detail::difference(pred, truth), shape, dx) / den);
}

/// E(u) = sum(|Du|^2 + (omega/c)^2 |u|^2) dx^d.
template <class T>
double energy(const std::vector<T>& u, const std::vector<double>& c, double omega, const GridShape& shape,
              double dx) {
  require(u.size() == shape.size() && c.size() == shape.size(), "energy: shape mismatch");
  double pot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    require(c[i] > 0, "energy: sound speed must be positive");
    const double k = omega / c[i];
    pot += k * k * detail::abs2(u[i]);
  }
  return (detail::gradient_sq(u, shape, dx) + pot) * detail::cell_measure(shape, dx);
}

template <class T>
double rel_energy_error(const std::vector<T>& pred, const std::vector<T>& truth, const std::vector<double>& c,
                        double omega, const GridShape& shape, double dx) {
  const double et = energy(truth, c, omega, shape, dx);
  require(et > 0, "rel_energy_error: truth has zero energy");
  return std::abs(energy(pred, c, omega, shape, dx) - et) / et;
}

/// |DFT(u)|^2, zero frequency moved to the center.
template <class T>
std::vector<double> power_spectrum(const std::vector<T>& u, const GridShape& shape) {
  std::vector<std::complex<double>> z(u.begin(), u.end());
  const auto f = fft::dft(z, shape);
  std::vector<double> p(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) p[i] = std::norm(f[i]);
  return fft::fftshift(p, shape);
}

struct ErrorReport {
  std::vector<double> rel_l2, rel_h1, rel_energy;

  struct Summary {
    double mean = 0.0, std = 0.0;
    std::size_t n = 0;
  };

  static Summary summarize(const std::vector<double>& v) {
    Summary s;
    s.n = v.size();
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / double(v.size()));
    return s;
  }

  template <class T>
  void add(const std::vector<T>& pred, const std::vector<T>& truth, const std::vector<double>& c, double omega,
           const GridShape& shape, double dx) {
    rel_l2.push_back(metrics::rel_l2(pred, truth));
    rel_h1.push_back(metrics::rel_h1(pred, truth, shape, dx));
    rel_energy.push_back(metrics::rel_energy_error(pred, truth, c, omega, shape, dx));
  }
};

}  // namespace hdl::metrics
