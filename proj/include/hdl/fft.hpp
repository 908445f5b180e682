#pragma once

// Thin RAII layer over FFTW. Plans are built with FFTW_ESTIMATE, which keeps
// results reproducible run to run; plan creation is serialized because the
// FFTW planner is not thread-safe.

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <mutex>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/grid.hpp"

namespace hdl::fft {

using cplx = std::complex<double>;

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct Plan {
  fftw_plan plan = nullptr;
  explicit Plan(fftw_plan p) : plan(p) {
    if (!plan) throw Error(ErrorKind::invalid_argument, "fftw plan creation failed");
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  void run() const { fftw_execute(plan); }
};

struct Buffer {
  void* data;
  explicit Buffer(std::size_t bytes) : data(fftw_malloc(bytes)) {
    if (!data) throw Error(ErrorKind::resource_limit, "fftw_malloc failed");
  }
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;
  ~Buffer() { fftw_free(data); }
  double* real() { return static_cast<double*>(data); }
  fftw_complex* complex() { return static_cast<fftw_complex*>(data); }
};

}  // namespace detail

/// Number of complex bins of a real transform along the last axis.
inline std::size_t half_width(const GridShape& s) { return s.width / 2 + 1; }

/// Inverse real transform of a half spectrum (height x (width/2+1)), normalized
/// by 1/size like numpy's irfft/irfft2.
inline std::vector<double> irfft(const std::vector<cplx>& spectrum, const GridShape& shape) {
  const std::size_t hw = half_width(shape);
  require(spectrum.size() == shape.height * hw, "irfft: spectrum size mismatch");
  detail::Buffer in(sizeof(fftw_complex) * spectrum.size());
  detail::Buffer out(sizeof(double) * shape.size());
  std::memcpy(in.data, spectrum.data(), sizeof(fftw_complex) * spectrum.size());
  fftw_plan raw;
  {
    std::lock_guard lock(detail::planner_mutex());
    raw = shape.rank == 1
              ? fftw_plan_dft_c2r_1d(int(shape.width), in.complex(), out.real(), FFTW_ESTIMATE)
              : fftw_plan_dft_c2r_2d(int(shape.height), int(shape.width), in.complex(), out.real(),
                                     FFTW_ESTIMATE);
  }
  detail::Plan plan(raw);
  plan.run();
  std::vector<double> result(out.real(), out.real() + shape.size());
  const double scale = 1.0 / double(shape.size());
  for (double& v : result) v *= scale;
  return result;
}

/// Forward real transform, unnormalized; returns height x (width/2+1) bins.
inline std::vector<cplx> rfft(const std::vector<double>& values, const GridShape& shape) {
  require(values.size() == shape.size(), "rfft: value count mismatch");
  const std::size_t hw = half_width(shape);
  detail::Buffer in(sizeof(double) * shape.size());
  detail::Buffer out(sizeof(fftw_complex) * shape.height * hw);
  fftw_plan raw;
  {
    std::lock_guard lock(detail::planner_mutex());
    raw = shape.rank == 1
              ? fftw_plan_dft_r2c_1d(int(shape.width), in.real(), out.complex(), FFTW_ESTIMATE)
              : fftw_plan_dft_r2c_2d(int(shape.height), int(shape.width), in.real(), out.complex(),
                                     FFTW_ESTIMATE);
  }
  detail::Plan plan(raw);
  std::memcpy(in.data, values.data(), sizeof(double) * values.size());
  plan.run();
  auto* first = reinterpret_cast<cplx*>(out.complex());
  return std::vector<cplx>(first, first + shape.height * hw);
}

/// Full complex forward DFT, unnormalized, natural (not shifted) ordering.
inline std::vector<cplx> dft(const std::vector<cplx>& values, const GridShape& shape) {
  require(values.size() == shape.size(), "dft: value count mismatch");
  detail::Buffer in(sizeof(fftw_complex) * shape.size());
  detail::Buffer out(sizeof(fftw_complex) * shape.size());
  fftw_plan raw;
  {
    std::lock_guard lock(detail::planner_mutex());
    raw = shape.rank == 1 ? fftw_plan_dft_1d(int(shape.width), in.complex(), out.complex(),
                                             FFTW_FORWARD, FFTW_ESTIMATE)
                          : fftw_plan_dft_2d(int(shape.height), int(shape.width), in.complex(),
                                             out.complex(), FFTW_FORWARD, FFTW_ESTIMATE);
  }
  detail::Plan plan(raw);
  std::memcpy(in.data, values.data(), sizeof(fftw_complex) * values.size());
  plan.run();
  auto* first = reinterpret_cast<cplx*>(out.complex());
  return std::vector<cplx>(first, first + shape.size());
}

/// Sample frequencies in cycles per sample (numpy fftfreq with d = 1).
inline double fftfreq(std::size_t i, std::size_t n) {
  const auto k = static_cast<long long>(i);
  const auto nn = static_cast<long long>(n);
  return double(k < (nn + 1) / 2 ? k : k - nn) / double(n);
}

/// Moves the zero-frequency bin to the center (numpy fftshift).
template <class T>
std::vector<T> fftshift(const std::vector<T>& values, const GridShape& shape) {
  std::vector<T> out(values.size());
  const std::size_t sh = shape.height / 2, sw = shape.width / 2;
  for (std::size_t r = 0; r < shape.height; ++r)
    for (std::size_t c = 0; c < shape.width; ++c)
      out[shape.index((r + sh) % shape.height, (c + sw) % shape.width)] = values[shape.index(r, c)];
  return out;
}

}  // namespace hdl::fft
