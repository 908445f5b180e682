#pragma once

// Small 1D convolutional denoiser with FiLM time conditioning and hand-written
// reverse-mode gradients. Activations are stored as [channels x (length*batch)]
// column-major matrices in position-major order: column n*B + b holds position
// n of sample b, so a circular shift is a rotation of whole column ranges.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/rng.hpp"

namespace hdl::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;

inline constexpr std::size_t kEmbedDim = 128;
inline constexpr std::size_t kHiddenDim = 256;
inline constexpr double kLayerNormEps = 1e-5;

/// omega_r = (pi/2) 10^{3(r-1)/63}, r = 1..64.
inline double embed_frequency(std::size_t r) {
  return std::numbers::pi / 2.0 * std::pow(10.0, 3.0 * double(r - 1) / 63.0);
}

/// [cos(omega_1 t) .. cos(omega_64 t), sin(omega_1 t) .. sin(omega_64 t)].
inline Vec embed_time(double t) {
  require(t >= 0.0 && t <= 1.0, "embed_time: t must lie in [0, 1]");
  Vec e(kEmbedDim);
  const std::size_t half = kEmbedDim / 2;
  for (std::size_t r = 1; r <= half; ++r) {
    const double a = embed_frequency(r) * t;
    e[Eigen::Index(r - 1)] = std::cos(a);
    e[Eigen::Index(half + r - 1)] = std::sin(a);
  }
  return e;
}

struct DenoiserConfig {
  std::size_t in_channels = 11;  // u_t plus conditioning channels
  std::size_t length = 128;
  std::size_t width = 32;
  std::size_t blocks = 5;
  std::size_t context_dim = 64;
  /// Block k convolves with dilation base^k; 1 gives the flat backbone.
  std::size_t dilation_base = 2;

  void validate() const {
    require(in_channels >= 1 && width >= 1 && blocks >= 1 && context_dim >= 1, "denoiser: empty dimension");
    require(length >= 2, "denoiser: length must be at least 2");
    require(dilation_base >= 1, "denoiser: dilation base must be at least 1");
  }

  std::size_t dilation(std::size_t block) const {
    std::size_t d = 1;
    for (std::size_t i = 0; i < block; ++i) d *= dilation_base;
    return d;
  }
};

/// Closed-form parameter count from the layer shapes.
inline std::size_t parameter_count(const DenoiserConfig& c) {
  const std::size_t C = c.width, d = c.context_dim;
  const std::size_t time = kHiddenDim * kEmbedDim + kHiddenDim + d * kHiddenDim + d;
  const std::size_t input = C * 3 * c.in_channels + C;
  const std::size_t block = (C * d + C) + 2 * C + (2 * C * d + 2 * C) + 2 * (C * 3 * C + C);
  const std::size_t head = 2 * C + 3 * C;
  return time + input + c.blocks * block + head;
}

struct ParamGroup {
  std::string name;
  std::size_t offset = 0, rows = 0, cols = 1;
  std::size_t size() const { return rows * cols; }
};

/// Offsets of every tensor inside the flat parameter vector.
struct Layout {
  struct Block {
    std::size_t proj_w, proj_b, ln_g, ln_b, film_w, film_b, conv1_w, conv1_b, conv2_w, conv2_b;
  };
  std::size_t t1_w, t1_b, t2_w, t2_b, in_w, in_b;
  std::vector<Block> blocks;
  std::size_t head_g, head_b, out_w;
  std::vector<ParamGroup> groups;
  std::size_t total = 0;

  explicit Layout(const DenoiserConfig& c) {
    const std::size_t C = c.width, d = c.context_dim;
    auto take = [&](const std::string& name, std::size_t rows, std::size_t cols) {
      groups.push_back({name, total, rows, cols});
      const std::size_t off = total;
      total += rows * cols;
      return off;
    };
    t1_w = take("time1.weight", kHiddenDim, kEmbedDim);
    t1_b = take("time1.bias", kHiddenDim, 1);
    t2_w = take("time2.weight", d, kHiddenDim);
    t2_b = take("time2.bias", d, 1);
    in_w = take("input.weight", 3 * C, c.in_channels);
    in_b = take("input.bias", C, 1);
    for (std::size_t k = 0; k < c.blocks; ++k) {
      const std::string p = "block" + std::to_string(k) + ".";
      Block b{};
      b.proj_w = take(p + "proj.weight", C, d);
      b.proj_b = take(p + "proj.bias", C, 1);
      b.ln_g = take(p + "norm.scale", C, 1);
      b.ln_b = take(p + "norm.shift", C, 1);
      b.film_w = take(p + "film.weight", 2 * C, d);
      b.film_b = take(p + "film.bias", 2 * C, 1);
      b.conv1_w = take(p + "conv1.weight", 3 * C, C);
      b.conv1_b = take(p + "conv1.bias", C, 1);
      b.conv2_w = take(p + "conv2.weight", 3 * C, C);
      b.conv2_b = take(p + "conv2.bias", C, 1);
      blocks.push_back(b);
    }
    head_g = take("head.norm.scale", C, 1);
    head_b = take("head.norm.shift", C, 1);
    out_w = take("head.conv.weight", 3, C);
  }
};

namespace detail {

inline Mat silu(const Mat& x) { return (x.array() / (1.0 + (-x.array()).exp())).matrix(); }

/// d silu(x)/dx times upstream gradient g.
inline Mat silu_backward(const Mat& x, const Mat& g) {
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
  return (g.array() * s * (1.0 + x.array() * (1.0 - s))).matrix();
}

/// Calls f(out_offset, in_offset, count) for the column ranges pairing output
/// position n with input position (n + shift) mod N in position-major layout.
template <class F>
void shifted_ranges(Eigen::Index N, Eigen::Index B, Eigen::Index shift, F&& f) {
  const Eigen::Index s = ((shift % N) + N) % N;
  f(Eigen::Index(0), s * B, (N - s) * B);
  if (s > 0) f((N - s) * B, Eigen::Index(0), s * B);
}

/// Kernel-3 circular convolution with dilation d. Weights are stacked per tap
/// as [3*Cout x Cin]; tap k reads position n + (k-1)d.
inline Mat conv(const Eigen::Ref<const Mat>& w, const Eigen::Ref<const Vec>* bias, const Mat& x, std::size_t length,
                std::size_t dil) {
  const Eigen::Index co = w.rows() / 3, N = Eigen::Index(length), B = x.cols() / N;
  Mat y = Mat::Zero(co, x.cols());
  for (Eigen::Index k = 0; k < 3; ++k) {
    const auto wk = w.middleRows(k * co, co);
    shifted_ranges(N, B, (k - 1) * Eigen::Index(dil), [&](Eigen::Index yo, Eigen::Index xo, Eigen::Index n) {
      y.middleCols(yo, n).noalias() += wk * x.middleCols(xo, n);
    });
  }
  if (bias) y.colwise() += *bias;
  return y;
}

/// Returns dL/dx and accumulates dL/dw (and dL/dbias when given).
inline Mat conv_backward(const Eigen::Ref<const Mat>& w, const Mat& x, const Mat& gy, std::size_t length,
                         std::size_t dil, Eigen::Ref<Mat> gw, Vec* gbias) {
  const Eigen::Index co = gy.rows(), N = Eigen::Index(length), B = x.cols() / N;
  Mat gx = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < 3; ++k) {
    const auto wk = w.middleRows(k * co, co);
    auto gwk = gw.middleRows(k * co, co);
    shifted_ranges(N, B, (k - 1) * Eigen::Index(dil), [&](Eigen::Index yo, Eigen::Index xo, Eigen::Index n) {
      gwk.noalias() += gy.middleCols(yo, n) * x.middleCols(xo, n).transpose();
      gx.middleCols(xo, n).noalias() += wk.transpose() * gy.middleCols(yo, n);
    });
  }
  if (gbias) *gbias += gy.rowwise().sum();
  return gx;
}

using SampleView = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
using ConstSampleView = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

/// The [C x N] slice of sample b inside a position-major [C x B*N] matrix.
inline SampleView sample(Mat& x, Eigen::Index b, Eigen::Index B) {
  return SampleView(x.data() + b * x.rows(), x.rows(), x.cols() / B, Eigen::OuterStride<>(x.rows() * B));
}
inline ConstSampleView sample(const Mat& x, Eigen::Index b, Eigen::Index B) {
  return ConstSampleView(x.data() + b * x.rows(), x.rows(), x.cols() / B, Eigen::OuterStride<>(x.rows() * B));
}

struct NormCache {
  Mat xhat;
  Vec inv_std;  // per sample
};

/// Normalizes each sample jointly over channels and positions, then applies a
/// per-channel affine. Zero-variance input maps to the shift.
inline Mat layer_norm(const Mat& x, const Eigen::Ref<const Vec>& g, const Eigen::Ref<const Vec>& b,
                      std::size_t length, NormCache& cache) {
  const Eigen::Index B = x.cols() / Eigen::Index(length);
  cache.xhat.resize(x.rows(), x.cols());
  cache.inv_std.resize(B);
  for (Eigen::Index s = 0; s < B; ++s) {
    const auto blk = sample(x, s, B);
    const double m = blk.mean();
    const double v = (blk.array() - m).square().mean();
    const double is = 1.0 / std::sqrt(v + kLayerNormEps);
    cache.inv_std[s] = is;
    sample(cache.xhat, s, B) = (blk.array() - m) * is;
  }
  return (cache.xhat.array().colwise() * g.array()).colwise() + b.array();
}

/// Returns dL/dx and accumulates dL/dg, dL/db.
inline Mat layer_norm_backward(const Mat& gy, const Eigen::Ref<const Vec>& g, const NormCache& cache,
                               std::size_t length, Eigen::Ref<Vec> dg, Eigen::Ref<Vec> db) {
  const Eigen::Index B = gy.cols() / Eigen::Index(length);
  dg += (gy.array() * cache.xhat.array()).rowwise().sum().matrix();
  db += gy.rowwise().sum();
  Mat gx = (gy.array().colwise() * g.array()).matrix();
  for (Eigen::Index s = 0; s < B; ++s) {
    auto dxh = sample(gx, s, B);
    const auto xh = sample(cache.xhat, s, B);
    const double m1 = dxh.mean();
    const double m2 = (dxh.array() * xh.array()).mean();
    dxh = cache.inv_std[s] * (dxh.array() - m1 - xh.array() * m2);
  }
  return gx;
}

/// Adds column b of `v` to every position of sample b.
inline void add_per_sample(Mat& x, const Mat& v, std::size_t length) {
  for (Eigen::Index n = 0; n < Eigen::Index(length); ++n) x.middleCols(n * v.cols(), v.cols()) += v;
}

inline Mat sum_per_sample(const Mat& x, std::size_t length) {
  const Eigen::Index B = x.cols() / Eigen::Index(length);
  Mat s = Mat::Zero(x.rows(), B);
  for (Eigen::Index n = 0; n < Eigen::Index(length); ++n) s += x.middleCols(n * B, B);
  return s;
}

}  // namespace detail

/// Intermediates recorded by the forward pass for backpropagation.
struct Tape {
  struct Block {
    Mat film, normed, a_pre, s1, c1, s2;
    detail::NormCache norm;
  };
  std::size_t batch = 0;
  Mat input, emb, h1, ctx;
  std::vector<Block> blocks;
  Mat head_normed, head_act;
  detail::NormCache head_norm;
};

/// Flat weight storage. Over-aligned so every parameter block starts at the
/// same offset from a SIMD boundary; Eigen peels unaligned heads differently
/// otherwise and rounding would depend on where the allocator put the buffer.
using ParamVec = std::vector<double, Eigen::aligned_allocator<double>>;

/// Weights of the denoiser plus its EMA shadow.
struct DenoiserParams {
  DenoiserConfig config;
  ParamVec values;
  ParamVec ema;
  double ema_decay = 0.999;

  DenoiserParams() = default;
  explicit DenoiserParams(const DenoiserConfig& c) : config(c) {
    c.validate();
    values.assign(Layout(c).total, 0.0);
    ema = values;
  }

  void validate() const {
    config.validate();
    require(values.size() == Layout(config).total && ema.size() == values.size(),
            "denoiser parameters do not match the configured shapes");
    require(ema_decay > 0.0 && ema_decay < 1.0, "EMA decay must lie in (0, 1)");
    for (double v : values) require(std::isfinite(v), "denoiser parameters must be finite");
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for affine maps; FiLM starts at the
/// identity modulation, norms at unit scale and zero shift.
inline DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  DenoiserParams p(cfg);
  const Layout L(cfg);
  Rng rng(seed);
  auto fill = [&](std::size_t off, std::size_t n, double fan_in) {
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (std::size_t i = 0; i < n; ++i) p.values[off + i] = u(rng);
  };
  const std::size_t C = cfg.width, d = cfg.context_dim;
  fill(L.t1_w, kHiddenDim * kEmbedDim, kEmbedDim);
  fill(L.t1_b, kHiddenDim, kEmbedDim);
  fill(L.t2_w, d * kHiddenDim, kHiddenDim);
  fill(L.t2_b, d, kHiddenDim);
  fill(L.in_w, C * 3 * cfg.in_channels, 3.0 * double(cfg.in_channels));
  fill(L.in_b, C, 3.0 * double(cfg.in_channels));
  for (const auto& b : L.blocks) {
    fill(b.proj_w, C * d, double(d));
    fill(b.proj_b, C, double(d));
    for (std::size_t i = 0; i < C; ++i) p.values[b.ln_g + i] = 1.0;
    for (std::size_t i = 0; i < C; ++i) p.values[b.film_b + i] = 1.0;
    fill(b.conv1_w, C * 3 * C, 3.0 * double(C));
    fill(b.conv1_b, C, 3.0 * double(C));
    fill(b.conv2_w, C * 3 * C, 3.0 * double(C));
    fill(b.conv2_b, C, 3.0 * double(C));
  }
  for (std::size_t i = 0; i < C; ++i) p.values[L.head_g + i] = 1.0;
  fill(L.out_w, 3 * C, 3.0 * double(C));
  p.ema = p.values;
  return p;
}

/// Forward/backward evaluator over a flat parameter vector. Holds no mutable
/// state, so one instance may serve concurrent forward calls.
class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& cfg) : cfg_(cfg), L_(cfg) { cfg.validate(); }

  const DenoiserConfig& config() const { return cfg_; }
  const Layout& layout() const { return L_; }

  /// x: [in_channels x length*batch] position-major, t: per-sample time in [0,1].
  /// Returns the single output channel as [1 x batch*length].
  Mat forward(const ParamVec& w, const Mat& x, const std::vector<double>& t, Tape* tape = nullptr) const {
    require(w.size() == L_.total, "denoise: parameter vector size mismatch");
    require(std::size_t(x.rows()) == cfg_.in_channels, "denoise: input channel mismatch");
    const std::size_t N = cfg_.length, C = cfg_.width, D = cfg_.context_dim;
    require(x.cols() > 0 && std::size_t(x.cols()) % N == 0, "denoise: input length mismatch");
    const std::size_t B = std::size_t(x.cols()) / N;
    require(t.size() == B, "denoise: one time value per sample required");
    Tape local;
    Tape& tp = tape ? *tape : local;
    tp.batch = B;
    tp.blocks.resize(cfg_.blocks);
    if (tape) tp.input = x;

    tp.emb.resize(Eigen::Index(kEmbedDim), Eigen::Index(B));
    for (std::size_t b = 0; b < B; ++b) tp.emb.col(Eigen::Index(b)) = embed_time(t[b]);
    tp.h1 = (m(w, L_.t1_w, kHiddenDim, kEmbedDim) * tp.emb).colwise() + v(w, L_.t1_b, kHiddenDim);
    tp.ctx = (m(w, L_.t2_w, D, kHiddenDim) * detail::silu(tp.h1)).colwise() + v(w, L_.t2_b, D);

    const auto in_b = v(w, L_.in_b, C);
    const Eigen::Ref<const Vec> in_bias(in_b);
    Mat h = detail::conv(m(w, L_.in_w, 3 * C, cfg_.in_channels), &in_bias, x, N, 1);

    for (std::size_t k = 0; k < cfg_.blocks; ++k) {
      const auto& lb = L_.blocks[k];
      auto& tb = tp.blocks[k];
      const std::size_t dil = cfg_.dilation(k);
      Mat a = h;
      const Mat proj = (m(w, lb.proj_w, C, D) * tp.ctx).colwise() + v(w, lb.proj_b, C);
      detail::add_per_sample(a, proj, N);
      tb.normed = detail::layer_norm(a, v(w, lb.ln_g, C), v(w, lb.ln_b, C), N, tb.norm);
      tb.film = (m(w, lb.film_w, 2 * C, D) * tp.ctx).colwise() + v(w, lb.film_b, 2 * C);
      tb.a_pre = tb.normed;
      {
        const auto gamma = tb.film.topRows(Eigen::Index(C)), beta = tb.film.bottomRows(Eigen::Index(C));
        for (std::size_t n = 0; n < N; ++n) {
          auto blk = tb.a_pre.middleCols(Eigen::Index(n * B), Eigen::Index(B));
          blk = blk.cwiseProduct(gamma) + beta;
        }
      }
      tb.s1 = detail::silu(tb.a_pre);
      const auto b1 = v(w, lb.conv1_b, C), b2 = v(w, lb.conv2_b, C);
      const Eigen::Ref<const Vec> bias1(b1), bias2(b2);
      tb.c1 = detail::conv(m(w, lb.conv1_w, 3 * C, C), &bias1, tb.s1, N, dil);
      tb.s2 = detail::silu(tb.c1);
      h += detail::conv(m(w, lb.conv2_w, 3 * C, C), &bias2, tb.s2, N, dil);
    }

    tp.head_normed = detail::layer_norm(h, v(w, L_.head_g, C), v(w, L_.head_b, C), N, tp.head_norm);
    tp.head_act = detail::silu(tp.head_normed);
    return detail::conv(m(w, L_.out_w, 3, C), nullptr, tp.head_act, N, 1);
  }

  /// Accumulates dL/dw into `grad` given dL/d(output) and a recorded tape.
  void backward(const ParamVec& w, const Tape& tp, const Mat& gout, ParamVec& grad) const {
    require(grad.size() == L_.total, "backward: gradient vector size mismatch");
    const std::size_t N = cfg_.length, C = cfg_.width, B = tp.batch, D = cfg_.context_dim;
    require(gout.rows() == 1 && std::size_t(gout.cols()) == B * N, "backward: output gradient shape mismatch");
    require(tp.input.cols() == gout.cols(), "backward: tape was not recorded");

    Mat g = detail::conv_backward(m(w, L_.out_w, 3, C), tp.head_act, gout, N, 1, gm(grad, L_.out_w, 3, C), nullptr);
    g = detail::silu_backward(tp.head_normed, g);
    Mat gh = detail::layer_norm_backward(g, v(w, L_.head_g, C), tp.head_norm, N, gv(grad, L_.head_g, C),
                                         gv(grad, L_.head_b, C));

    Mat gctx = Mat::Zero(Eigen::Index(D), Eigen::Index(B));
    Vec gb = Vec::Zero(Eigen::Index(C));
    for (std::size_t k = cfg_.blocks; k-- > 0;) {
      const auto& lb = L_.blocks[k];
      const auto& tb = tp.blocks[k];
      const std::size_t dil = cfg_.dilation(k);
      // h_out = h_in + conv2(silu(conv1(silu(film(LN(h_in + proj))))))
      gb.setZero();
      Mat gc1 = detail::conv_backward(m(w, lb.conv2_w, 3 * C, C), tb.s2, gh, N, dil, gm(grad, lb.conv2_w, 3 * C, C), &gb);
      gv(grad, lb.conv2_b, C) += gb;
      gc1 = detail::silu_backward(tb.c1, gc1);
      gb.setZero();
      Mat ga = detail::conv_backward(m(w, lb.conv1_w, 3 * C, C), tb.s1, gc1, N, dil, gm(grad, lb.conv1_w, 3 * C, C), &gb);
      gv(grad, lb.conv1_b, C) += gb;
      ga = detail::silu_backward(tb.a_pre, ga);

      Mat gfilm = Mat::Zero(Eigen::Index(2 * C), Eigen::Index(B));
      Mat gn(ga.rows(), ga.cols());
      const auto gamma = tb.film.topRows(Eigen::Index(C));
      for (std::size_t n = 0; n < N; ++n) {
        const Eigen::Index o = Eigen::Index(n * B), nb = Eigen::Index(B);
        const auto gab = ga.middleCols(o, nb);
        gfilm.topRows(Eigen::Index(C)) += gab.cwiseProduct(tb.normed.middleCols(o, nb));
        gfilm.bottomRows(Eigen::Index(C)) += gab;
        gn.middleCols(o, nb) = gab.cwiseProduct(gamma);
      }
      gm(grad, lb.film_w, 2 * C, D) += gfilm * tp.ctx.transpose();
      gv(grad, lb.film_b, 2 * C) += gfilm.rowwise().sum();
      gctx += m(w, lb.film_w, 2 * C, D).transpose() * gfilm;

      const Mat gx = detail::layer_norm_backward(gn, v(w, lb.ln_g, C), tb.norm, N, gv(grad, lb.ln_g, C),
                                                 gv(grad, lb.ln_b, C));
      const Mat gproj = detail::sum_per_sample(gx, N);
      gm(grad, lb.proj_w, C, D) += gproj * tp.ctx.transpose();
      gv(grad, lb.proj_b, C) += gproj.rowwise().sum();
      gctx += m(w, lb.proj_w, C, D).transpose() * gproj;
      gh += gx;
    }

    gb.setZero();
    detail::conv_backward(m(w, L_.in_w, 3 * C, cfg_.in_channels), tp.input, gh, N, 1,
                          gm(grad, L_.in_w, 3 * C, cfg_.in_channels), &gb);
    gv(grad, L_.in_b, C) += gb;

    gm(grad, L_.t2_w, D, kHiddenDim) += gctx * detail::silu(tp.h1).transpose();
    gv(grad, L_.t2_b, D) += gctx.rowwise().sum();
    const Mat gh1 = detail::silu_backward(tp.h1, m(w, L_.t2_w, D, kHiddenDim).transpose() * gctx);
    gm(grad, L_.t1_w, kHiddenDim, kEmbedDim) += gh1 * tp.emb.transpose();
    gv(grad, L_.t1_b, kHiddenDim) += gh1.rowwise().sum();
  }

 private:
  static CMapMat m(const ParamVec& w, std::size_t off, std::size_t r, std::size_t c) {
    return CMapMat(w.data() + off, Eigen::Index(r), Eigen::Index(c));
  }
  static Eigen::Map<const Vec> v(const ParamVec& w, std::size_t off, std::size_t n) {
    return Eigen::Map<const Vec>(w.data() + off, Eigen::Index(n));
  }
  static MapMat gm(ParamVec& g, std::size_t off, std::size_t r, std::size_t c) {
    return MapMat(g.data() + off, Eigen::Index(r), Eigen::Index(c));
  }
  static Eigen::Map<Vec> gv(ParamVec& g, std::size_t off, std::size_t n) {
    return Eigen::Map<Vec>(g.data() + off, Eigen::Index(n));
  }

  DenoiserConfig cfg_;
  Layout L_;
};

/// Mean squared error over every output element and its gradient.
inline double mse_loss(const Mat& pred, const Mat& target, Mat* grad = nullptr) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse_loss: shape mismatch");
  const Mat diff = pred - target;
  const double n = double(diff.size());
  if (grad) *grad = (2.0 / n) * diff;
  return diff.squaredNorm() / n;
}

struct AdamConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction.
struct Adam {
  AdamConfig config;
  ParamVec m1, m2;
  std::uint64_t steps = 0;

  Adam() = default;
  Adam(std::size_t n, const AdamConfig& c) : config(c), m1(n, 0.0), m2(n, 0.0) {}

  void step(ParamVec& w, const ParamVec& g, double lr) {
    require(w.size() == g.size() && g.size() == m1.size(), "adam: size mismatch");
    ++steps;
    const double b1 = config.beta1, b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, double(steps));
    const double c2 = 1.0 - std::pow(b2, double(steps));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
      m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + config.eps);
    }
  }
};

/// shadow <- decay * shadow + (1 - decay) * params; decay is taken as given so
/// the endpoint cases 0 and 1 behave as copy and hold.
inline void ema_update(ParamVec& shadow, const ParamVec& params, double decay) {
  require(shadow.size() == params.size(), "ema_update: size mismatch");
  require(decay >= 0.0 && decay <= 1.0, "ema_update: decay must lie in [0, 1]");
  for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] = decay * shadow[i] + (1.0 - decay) * params[i];
}

}  // namespace hdl::nn
