#pragma once

// Discrete variance-preserving noise schedules, the closed-form forward
// marginal, and the continuous-time VP scalings matched to each schedule.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hdl/error.hpp"

namespace hdl {

enum class ScheduleKind { linear, cosine };

inline std::string to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

inline ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw Error(ErrorKind::invalid_argument, "unknown schedule kind '" + s + "'");
}

struct ScheduleParams {
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double cosine_offset = 0.008;
  double beta_clip = 0.999;
};

/// Steps are 1-based: beta(t), alpha(t), alpha_bar(t) for t = 1..T, with the
/// empty-product convention alpha_bar(0) = 1.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  int T = 0;
  ScheduleParams params;
  std::vector<double> beta_, alpha_, alpha_bar_;

  double beta(int t) const { return beta_.at(std::size_t(t - 1)); }
  double alpha(int t) const { return alpha_.at(std::size_t(t - 1)); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(std::size_t(t - 1)); }

  /// Posterior variance (1 - abar_{t-1}) / (1 - abar_t) * beta_t.
  double posterior_variance(int t) const {
    return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
  }
};

namespace detail {
inline double cosine_g(double s, double offset) {
  const double v = std::cos((s + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
  return v * v;
}
}  // namespace detail

inline NoiseSchedule make_schedule(ScheduleKind kind, int T, const ScheduleParams& p = {}) {
  require(T >= 1, "make_schedule: T must be at least 1");
  require(p.beta_min > 0 && p.beta_max < 1 && p.beta_min <= p.beta_max, "make_schedule: bad beta range");
  require(p.cosine_offset > 0 && p.beta_clip > 0 && p.beta_clip < 1, "make_schedule: bad cosine params");
  NoiseSchedule s;
  s.kind = kind;
  s.T = T;
  s.params = p;
  s.beta_.resize(std::size_t(T));
  if (kind == ScheduleKind::linear) {
    for (int t = 1; t <= T; ++t)
      s.beta_[std::size_t(t - 1)] =
          T == 1 ? p.beta_min : p.beta_min + (p.beta_max - p.beta_min) * double(t - 1) / double(T - 1);
  } else {
    const double g0 = detail::cosine_g(0.0, p.cosine_offset);
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      const double ab = detail::cosine_g(double(t) / T, p.cosine_offset) / g0;
      s.beta_[std::size_t(t - 1)] = std::min(1.0 - ab / prev, p.beta_clip);
      prev = ab;
    }
  }
  s.alpha_.resize(std::size_t(T));
  s.alpha_bar_.resize(std::size_t(T));
  double prod = 1.0;
  for (std::size_t i = 0; i < std::size_t(T); ++i) {
    s.alpha_[i] = 1.0 - s.beta_[i];
    prod *= s.alpha_[i];
    s.alpha_bar_[i] = prod;
  }
  return s;
}

/// u_t = sqrt(abar_t) u0 + sqrt(1 - abar_t) eps.
inline std::vector<double> forward_marginal(std::span<const double> u0, int t, std::span<const double> eps,
                                            const NoiseSchedule& sched) {
  require(t >= 0 && t <= sched.T, "forward_marginal: step out of range");
  require(u0.size() == eps.size(), "forward_marginal: shape mismatch");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<double> out(u0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * u0[i] + b * eps[i];
  return out;
}

struct VpScaling {
  double mu = 1.0;
  double sigma = 0.0;
};

/// mu(t) = exp(-1/2 int_0^t beta(s) ds) for the continuous schedule whose
/// discretization on t_k = k/T is `sched`; sigma = sqrt(1 - mu^2).
inline VpScaling vp_scalings(double t, const NoiseSchedule& sched) {
  require(t >= 0.0 && t <= 1.0, "vp_scalings: t must lie in [0, 1]");
  const ScheduleParams& p = sched.params;
  double mu2;
  if (sched.kind == ScheduleKind::linear) {
    const double T = sched.T;
    const double integral = T * (p.beta_min * t + 0.5 * (p.beta_max - p.beta_min) * t * t);
    mu2 = std::exp(-integral);
  } else {
    mu2 = detail::cosine_g(t, p.cosine_offset) / detail::cosine_g(0.0, p.cosine_offset);
  }
  mu2 = std::clamp(mu2, 0.0, 1.0);
  return {std::sqrt(mu2), std::sqrt(1.0 - mu2)};
}

}  // namespace hdl
