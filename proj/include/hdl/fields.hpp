#pragma once

// Heterogeneous sound-speed synthesis by spectral Gaussian random fields and
// assembly of the clean conditioning channels fed to the denoiser.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/fft.hpp"
#include "hdl/grid.hpp"
#include "hdl/rng.hpp"

namespace hdl {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GrfHyperParams {
  double alpha = 1.5;  // spectral exponent, used when alpha_range is degenerate
  double ell = 0.5;    // correlation length in sample units of the unit-spacing frequency grid
  double c_bg = 2000.0;
  double sigma_c = 1270.0;
  double c_min = 1600.0;
  double c_max = 2400.0;
  // Per-field hyperparameter draws; an empty range (lo == hi) pins the fixed value above.
  Range alpha_range{0.5, 2.5};
  Range ell_range{0.35, 0.7};
  int max_attempts = 1000;

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    require(finite(alpha) && finite(ell) && finite(c_bg) && finite(sigma_c) && finite(c_min) &&
                finite(c_max),
            "GRF hyperparameters must be finite");
    require(alpha > 0 && ell > 0, "GRF alpha and ell must be positive");
    require(c_min < c_bg && c_bg < c_max, "GRF requires c_min < c_bg < c_max");
    require(sigma_c >= 0, "GRF sigma_c must be non-negative");
    require(alpha_range.lo <= alpha_range.hi && (alpha_range.lo == alpha_range.hi || alpha_range.lo > 0),
            "bad alpha range");
    require(ell_range.lo <= ell_range.hi && (ell_range.lo == ell_range.hi || ell_range.lo > 0),
            "bad ell range");
    require(max_attempts >= 1, "rejection cap must be at least 1");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "alpha in [" << alpha_range.lo << ", " << alpha_range.hi << "], ell in [" << ell_range.lo
       << ", " << ell_range.hi << "], c_bg=" << c_bg << ", sigma_c=" << sigma_c << ", bounds=("
       << c_min << ", " << c_max << ")";
    return os.str();
  }
};

struct CoefficientField {
  GridShape shape;
  std::vector<double> values;
  double dx = 1.0;
  std::uint64_t seed = 0;
  double alpha = 0.0;  // drawn spectral exponent
  double ell = 0.0;    // drawn correlation length
  int attempts = 0;    // rejection rounds used
};

/// lambda(K) = exp(-(ell K)^alpha), elementwise.
inline std::vector<double> spectral_envelope(const std::vector<double>& kgrid, double alpha,
                                             double ell) {
  require(std::isfinite(alpha) && std::isfinite(ell), "spectral_envelope: non-finite parameter");
  require(alpha > 0 && ell > 0, "spectral_envelope: alpha and ell must be positive");
  std::vector<double> out(kgrid.size());
  for (std::size_t i = 0; i < kgrid.size(); ++i) {
    require(std::isfinite(kgrid[i]) && kgrid[i] >= 0, "spectral_envelope: bad wavenumber");
    out[i] = std::exp(-std::pow(ell * kgrid[i], alpha));
  }
  return out;
}

/// |K| on the half-spectrum layout: fftfreq along rows, rfftfreq along columns.
inline std::vector<double> wavenumber_grid(const GridShape& shape) {
  const std::size_t hw = fft::half_width(shape);
  std::vector<double> k(shape.height * hw);
  for (std::size_t r = 0; r < shape.height; ++r) {
    const double kr = shape.rank == 1 ? 0.0 : fft::fftfreq(r, shape.height);
    for (std::size_t c = 0; c < hw; ++c) {
      const double kc = double(c) / double(shape.width);
      k[r * hw + c] = std::sqrt(kr * kr + kc * kc);
    }
  }
  return k;
}

/// Zero-mean GRF realization for fixed (alpha, ell); one attempt of the sampler.
inline std::vector<double> grf_realization(const GridShape& shape, const std::vector<double>& envelope,
                                           Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<fft::cplx> spec(envelope.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    spec[i] = envelope[i] * fft::cplx(re, im);
  }
  std::vector<double> u = fft::irfft(spec, shape);
  double mean = 0.0;
  for (double v : u) mean += v;
  mean /= double(u.size());
  for (double& v : u) v -= mean;
  return u;
}

/// Draws hyperparameters, then rejection-samples c = c_bg + sigma_c * u until
/// every value lies strictly inside (c_min, c_max).
inline CoefficientField sample_grf(const GridShape& shape, const GrfHyperParams& hp,
                                   std::uint64_t seed, double dx = 1.0) {
  hp.validate();
  require(shape.width >= 2 && (shape.rank == 1 || shape.height >= 2),
          "sample_grf: grid needs at least 2 points per axis");
  Rng rng(seed);
  auto draw = [&rng](Range r, double fixed) {
    if (r.hi <= r.lo) return fixed;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  CoefficientField field;
  field.shape = shape;
  field.dx = dx;
  field.seed = seed;
  field.alpha = draw(hp.alpha_range, hp.alpha);
  field.ell = draw(hp.ell_range, hp.ell);
  const auto envelope = spectral_envelope(wavenumber_grid(shape), field.alpha, field.ell);
  for (int attempt = 1; attempt <= hp.max_attempts; ++attempt) {
    auto u = grf_realization(shape, envelope, rng);
    bool inside = true;
    for (double& v : u) {
      v = hp.c_bg + hp.sigma_c * v;
      if (!(v > hp.c_min && v < hp.c_max)) inside = false;
    }
    if (inside) {
      field.values = std::move(u);
      field.attempts = attempt;
      return field;
    }
  }
  std::ostringstream os;
  os << "no admissible field after " << hp.max_attempts << " attempts (alpha=" << field.alpha
     << ", ell=" << field.ell << "; " << hp.describe() << ")";
  throw Error(ErrorKind::generation_failure, os.str());
}

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Pooled mean/std over a set of fields; used once per dataset.
inline NormStats dataset_norm_stats(const std::vector<CoefficientField>& fields) {
  require(!fields.empty(), "dataset_norm_stats: no fields");
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& f : fields)
    for (double v : f.values) {
      sum += v;
      ++n;
    }
  const double mean = sum / double(n);
  for (const auto& f : fields)
    for (double v : f.values) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(n));
  return {mean, sd > 0 ? sd : 1.0};
}

struct ConditioningStack {
  GridShape shape;
  std::size_t encoding_levels = 0;
  /// [normalized speed, source mask, positional encodings...]
  std::vector<std::vector<double>> channels;

  std::size_t count() const { return channels.size(); }
  const std::vector<double>& speed() const { return channels[0]; }
  const std::vector<double>& mask() const { return channels[1]; }
};

inline std::size_t conditioning_channels(int rank, std::size_t levels) {
  return 2 + (rank == 1 ? 2 : 4) * levels;
}

/// Binary disk of radius `radius` (grid units) around `center`.
inline std::vector<double> disk_mask(const GridShape& shape, GridIndex center, double radius) {
  require(radius >= 0, "disk_mask: negative radius");
  const double cr = shape.rank == 1 ? 0.0 : double(center.row);
  const double cc = double(center.col);
  const bool inside = cc - radius >= 0 && cc + radius <= double(shape.width - 1) &&
                      (shape.rank == 1 ||
                       (cr - radius >= 0 && cr + radius <= double(shape.height - 1)));
  require(inside, "source disk intersects the grid boundary");
  std::vector<double> mask(shape.size(), 0.0);
  for (std::size_t r = 0; r < shape.height; ++r)
    for (std::size_t c = 0; c < shape.width; ++c) {
      const double dr = shape.rank == 1 ? 0.0 : double(r) - cr;
      const double dc = double(c) - cc;
      if (dr * dr + dc * dc <= radius * radius) mask[shape.index(r, c)] = 1.0;
    }
  return mask;
}

inline ConditioningStack build_conditioning(const CoefficientField& c, GridIndex source_center,
                                            double source_radius, std::size_t levels,
                                            const NormStats& norm) {
  require(levels >= 1, "build_conditioning: need at least one encoding level");
  require(norm.std > 0, "build_conditioning: normalization std must be positive");
  const GridShape& s = c.shape;
  ConditioningStack z;
  z.shape = s;
  z.encoding_levels = levels;
  std::vector<double> speed(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) speed[i] = (c.values[i] - norm.mean) / norm.std;
  z.channels.push_back(std::move(speed));
  z.channels.push_back(disk_mask(s, source_center, source_radius));
  for (std::size_t l = 0; l < levels; ++l) {
    const double freq = std::ldexp(std::numbers::pi, int(l));
    std::vector<double> sx(s.size()), cx(s.size()), sy(s.size()), cy(s.size());
    for (std::size_t r = 0; r < s.height; ++r)
      for (std::size_t col = 0; col < s.width; ++col) {
        const std::size_t i = s.index(r, col);
        const double x = double(col) / double(s.width);
        const double y = double(r) / double(s.height);
        sx[i] = std::sin(freq * x);
        cx[i] = std::cos(freq * x);
        sy[i] = std::sin(freq * y);
        cy[i] = std::cos(freq * y);
      }
    z.channels.push_back(std::move(sx));
    z.channels.push_back(std::move(cx));
    if (s.rank == 2) {
      z.channels.push_back(std::move(sy));
      z.channels.push_back(std::move(cy));
    }
  }
  return z;
}

}  // namespace hdl
