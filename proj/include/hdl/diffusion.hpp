#pragma once

// Conditional denoising training, the deterministic regression baseline, and
// the three reverse-time samplers (ancestral DDPM, DDIM, VP probability flow).
// Samplers talk to the network through EpsFn so closed-form denoisers can be
// plugged in for testing.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "hdl/error.hpp"
#include "hdl/fields.hpp"
#include "hdl/nn.hpp"
#include "hdl/rng.hpp"
#include "hdl/schedules.hpp"

namespace hdl {

using nn::Mat;
using nn::Vec;

/// One conditional training pair: conditioning channels [C x N] and the clean target.
struct Example {
  Mat cond;
  Vec target;
};

inline Mat conditioning_matrix(const ConditioningStack& z) {
  require(z.count() > 0, "conditioning_matrix: empty stack");
  Mat m(Eigen::Index(z.count()), Eigen::Index(z.shape.size()));
  for (std::size_t c = 0; c < z.count(); ++c)
    for (std::size_t i = 0; i < z.shape.size(); ++i) m(Eigen::Index(c), Eigen::Index(i)) = z.channels[c][i];
  return m;
}

enum class Objective { epsilon, regression };

inline std::string to_string(Objective o) { return o == Objective::epsilon ? "diffusion" : "regressor"; }

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 150;
  double learning_rate = 2e-3;
  /// Halve (times lr_decay) every lr_decay_every epochs; 0 picks epochs/4.
  std::size_t lr_decay_every = 0;
  double lr_decay = 0.5;
  double ema_decay = 0.999;
  int train_steps = 1000;
  ScheduleKind schedule = ScheduleKind::cosine;
  std::uint64_t seed = 0;

  void validate() const {
    require(batch_size >= 1, "train: batch_size must be at least 1");
    require(epochs >= 1, "train: epochs must be at least 1");
    require(std::isfinite(learning_rate) && learning_rate > 0, "train: learning_rate must be positive");
    require(lr_decay > 0 && lr_decay <= 1, "train: lr_decay must lie in (0, 1]");
    require(ema_decay > 0 && ema_decay < 1, "train: ema_decay must lie in (0, 1)");
    require(train_steps >= 1, "train: train_steps must be at least 1");
  }

  std::size_t decay_interval() const { return lr_decay_every ? lr_decay_every : std::max<std::size_t>(1, epochs / 4); }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

/// Trained weights plus everything needed to sample or predict with them.
struct Checkpoint {
  Objective objective = Objective::epsilon;
  nn::DenoiserParams params;
  TrainConfig train;
  ScheduleParams schedule_params;
  /// Bound applied to the clean-signal estimate during sampling.
  double x0_clip = std::numeric_limits<double>::infinity();
  NormStats norm;
  std::vector<EpochLog> log;
};

/// Raised when the loss stops being finite; carries the weights of the last
/// completed epoch.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, Checkpoint last_good)
      : Error(ErrorKind::training_failure, what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

namespace detail {

/// Packs examples into the position-major network input; row 0 is the state channel.
inline Mat pack_input(const std::vector<const Example*>& batch, const Mat& state) {
  const Eigen::Index B = Eigen::Index(batch.size());
  const Eigen::Index C = batch[0]->cond.rows(), N = batch[0]->cond.cols();
  Mat x(C + 1, N * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Mat& z = batch[std::size_t(b)]->cond;
    for (Eigen::Index n = 0; n < N; ++n) {
      x(0, n * B + b) = state(0, n * B + b);
      x.block(1, n * B + b, C, 1) = z.col(n);
    }
  }
  return x;
}

inline Mat pack_rows(const std::vector<Vec>& rows) {
  const Eigen::Index B = Eigen::Index(rows.size()), N = rows[0].size();
  Mat m(1, N * B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index n = 0; n < N; ++n) m(0, n * B + b) = rows[std::size_t(b)][n];
  return m;
}

inline Vec unpack_row(const Mat& m, Eigen::Index b, Eigen::Index B) {
  const Eigen::Index N = m.cols() / B;
  Vec v(N);
  for (Eigen::Index n = 0; n < N; ++n) v[n] = m(0, n * B + b);
  return v;
}

/// Builds (input, target, times) for one minibatch under the given objective.
inline double batch_loss(const nn::Denoiser& net, const nn::ParamVec& w,
                         const std::vector<const Example*>& batch, Objective obj, const NoiseSchedule& sched, Rng& rng,
                         nn::Tape* tape, Mat* gout) {
  const Eigen::Index B = Eigen::Index(batch.size()), N = batch[0]->target.size();
  Mat state = Mat::Zero(1, N * B), target(1, N * B);
  std::vector<double> times(std::size_t(B), 0.0);
  if (obj == Objective::epsilon) {
    std::uniform_int_distribution<int> pick(1, sched.T);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index b = 0; b < B; ++b) {
      const int t = pick(rng);
      times[std::size_t(b)] = double(t) / sched.T;
      const double a = std::sqrt(sched.alpha_bar(t)), s = std::sqrt(1.0 - sched.alpha_bar(t));
      for (Eigen::Index n = 0; n < N; ++n) {
        const double e = gauss(rng);
        state(0, n * B + b) = a * batch[std::size_t(b)]->target[n] + s * e;
        target(0, n * B + b) = e;
      }
    }
  } else {
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index n = 0; n < N; ++n) target(0, n * B + b) = batch[std::size_t(b)]->target[n];
  }
  const Mat pred = net.forward(w, pack_input(batch, state), times, tape);
  return nn::mse_loss(pred, target, gout);
}

inline void check_examples(const std::vector<Example>& data, const nn::DenoiserConfig& cfg, const char* what) {
  for (const auto& e : data)
    require(std::size_t(e.cond.rows()) + 1 == cfg.in_channels && std::size_t(e.cond.cols()) == cfg.length &&
                std::size_t(e.target.size()) == cfg.length,
            std::string(what) + ": example shape does not match the network");
}

}  // namespace detail

/// Mean loss of the EMA weights on `val_set`, with a fixed noise stream so the
/// value is reproducible from a checkpoint alone.
inline double validation_loss(const Checkpoint& ck, const std::vector<Example>& val_set) {
  require(!val_set.empty(), "validation: empty set");
  detail::check_examples(val_set, ck.params.config, "validation");
  const nn::Denoiser net(ck.params.config);
  const NoiseSchedule sched = make_schedule(ck.train.schedule, ck.train.train_steps, ck.schedule_params);
  Rng rng(derive_seed(ck.train.seed, 3));
  double total = 0.0;
  for (std::size_t start = 0; start < val_set.size(); start += ck.train.batch_size) {
    std::vector<const Example*> batch;
    for (std::size_t i = start; i < std::min(val_set.size(), start + ck.train.batch_size); ++i)
      batch.push_back(&val_set[i]);
    total += detail::batch_loss(net, ck.params.ema, batch, ck.objective, sched, rng, nullptr, nullptr) *
             double(batch.size());
  }
  return total / double(val_set.size());
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimizes E||eps - eps_theta(u_t, t, z)||^2 (or ||u0 - f(z)||^2 for the
/// regressor) with Adam, step-decayed learning rate and an EMA of weights.
inline Checkpoint train_model(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                              const nn::DenoiserConfig& arch, const TrainConfig& cfg, Objective obj,
                              const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!train_set.empty(), "train: empty training set");
  detail::check_examples(train_set, arch, "train");
  detail::check_examples(val_set, arch, "train");

  Checkpoint ck;
  ck.objective = obj;
  ck.train = cfg;
  ck.params = nn::init_params(arch, derive_seed(cfg.seed, 1));
  ck.params.ema_decay = cfg.ema_decay;
  double peak = 0.0;
  for (const auto& e : train_set) peak = std::max(peak, e.target.cwiseAbs().maxCoeff());
  ck.x0_clip = 1.5 * peak;

  const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.train_steps, ck.schedule_params);
  const nn::Denoiser net(arch);
  nn::Adam opt(ck.params.values.size(), nn::AdamConfig{cfg.learning_rate});
  nn::ParamVec grad(ck.params.values.size());
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  Checkpoint last_good = ck;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, double(epoch / cfg.decay_interval()));
    Rng rng(derive_seed(cfg.seed, 2, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      nn::Tape tape;
      Mat gout;
      const double loss = detail::batch_loss(net, ck.params.values, batch, obj, sched, rng, &tape, &gout);
      if (!std::isfinite(loss))
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                  std::to_string(start) + "; learning rate " + std::to_string(lr),
                              last_good);
      std::fill(grad.begin(), grad.end(), 0.0);
      net.backward(ck.params.values, tape, gout, grad);
      opt.step(ck.params.values, grad, lr);
      nn::ema_update(ck.params.ema, ck.params.values, cfg.ema_decay);
      total += loss * double(batch.size());
    }

    EpochLog log{epoch, total / double(train_set.size()), 0.0, lr};
    if (!val_set.empty()) log.val_loss = validation_loss(ck, val_set);
    ck.log.push_back(log);
    if (on_epoch) on_epoch(log);
    last_good = ck;
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Samplers

enum class SamplerKind { ddpm, ddim, sde };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::ddpm: return "ddpm";
    case SamplerKind::ddim: return "ddim";
    case SamplerKind::sde: return "sde";
  }
  return "unknown";
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "ddpm") return SamplerKind::ddpm;
  if (s == "ddim") return SamplerKind::ddim;
  if (s == "sde") return SamplerKind::sde;
  throw Error(ErrorKind::invalid_argument, "unknown sampler '" + s + "'");
}

struct SampleConfig {
  SamplerKind sampler = SamplerKind::ddpm;
  ScheduleKind schedule = ScheduleKind::cosine;
  int steps = 1000;
  double eta = 0.0;
  std::size_t num_samples = 10;
  std::uint64_t seed = 0;

  void validate() const {
    require(steps >= 1, "sample: steps must be at least 1");
    require(eta >= 0.0 && eta <= 1.0, "sample: eta must lie in [0, 1]");
    require(num_samples >= 1, "sample: need at least one sample");
  }
};

/// Noise level handed to the denoiser: network time in [0,1] and the signal
/// fraction alpha_bar at that time.
struct NoiseLevel {
  double t = 0.0;
  double alpha_bar = 1.0;
};

/// Predicts eps for a position-major batch of states [1 x N*B].
using EpsFn = std::function<Mat(const Mat& state, const NoiseLevel& level)>;

namespace detail {

inline Mat gaussian_state(std::vector<Rng>& rngs, Eigen::Index N) {
  const Eigen::Index B = Eigen::Index(rngs.size());
  Mat x(1, N * B);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index n = 0; n < N; ++n) x(0, n * B + b) = g(rngs[std::size_t(b)]);
  return x;
}

inline Mat clean_estimate(const Mat& x, const Mat& eps, double alpha_bar, double clip, double min_scale = 0.0) {
  const double scale = std::max(std::sqrt(alpha_bar), min_scale);
  const double s = std::sqrt(std::max(0.0, 1.0 - alpha_bar));
  Mat x0 = (x - s * eps) / scale;
  if (std::isfinite(clip)) x0 = x0.cwiseMax(-clip).cwiseMin(clip);
  return x0;
}

}  // namespace detail

/// Ancestral sampling with the Gaussian reverse transition. The mean is written
/// through the clean-signal estimate x0 = (x - sqrt(1-abar) eps)/sqrt(abar),
/// which equals (x - beta/sqrt(1-abar) eps)/sqrt(alpha) whenever x0 is not clipped.
inline Mat sample_ddpm(const EpsFn& eps_fn, const NoiseSchedule& sched, Eigen::Index length, std::vector<Rng>& rngs,
                       double clip = std::numeric_limits<double>::infinity()) {
  require(!rngs.empty(), "sample_ddpm: need one generator per sample");
  Mat x = detail::gaussian_state(rngs, length);
  const Eigen::Index B = Eigen::Index(rngs.size());
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = sched.T; t >= 1; --t) {
    const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1);
    const Mat eps = eps_fn(x, {double(t) / sched.T, ab});
    const Mat x0 = detail::clean_estimate(x, eps, ab, clip);
    const double c0 = std::sqrt(ab_prev) * sched.beta(t) / (1.0 - ab);
    const double ct = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
    x = c0 * x0 + ct * x;
    if (t > 1) {
      const double sd = std::sqrt(sched.posterior_variance(t));
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index n = 0; n < length; ++n) x(0, n * B + b) += sd * g(rngs[std::size_t(b)]);
    }
  }
  return x;
}

/// Full descending step sequence T, T-1, ..., 1.
inline std::vector<int> full_sequence(int T) {
  std::vector<int> seq(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) seq[std::size_t(i)] = T - i;
  return seq;
}

/// DDIM over a strictly decreasing subsequence of schedule steps, ending at
/// alpha_bar = 1. eta in [0,1] mixes fresh noise into the direction term.
inline Mat sample_ddim(const EpsFn& eps_fn, const NoiseSchedule& sched, const std::vector<int>& seq, double eta,
                       Eigen::Index length, std::vector<Rng>& rngs,
                       double clip = std::numeric_limits<double>::infinity()) {
  require(!rngs.empty(), "sample_ddim: need one generator per sample");
  require(!seq.empty(), "sample_ddim: empty step sequence");
  require(eta >= 0.0 && eta <= 1.0, "sample_ddim: eta must lie in [0, 1]");
  for (std::size_t i = 0; i < seq.size(); ++i) {
    require(seq[i] >= 1 && seq[i] <= sched.T, "sample_ddim: step outside the schedule");
    require(i == 0 || seq[i] < seq[i - 1], "sample_ddim: step sequence must be strictly decreasing");
  }
  Mat x = detail::gaussian_state(rngs, length);
  const Eigen::Index B = Eigen::Index(rngs.size());
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int t = seq[i];
    const double ab = sched.alpha_bar(t);
    const double ab_next = i + 1 < seq.size() ? sched.alpha_bar(seq[i + 1]) : 1.0;
    const Mat eps = eps_fn(x, {double(t) / sched.T, ab});
    const Mat x0 = detail::clean_estimate(x, eps, ab, clip);
    const double keep = std::sqrt(1.0 - ab_next);
    Mat dir = std::sqrt(1.0 - eta * eta) * eps;
    if (eta > 0.0)
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index n = 0; n < length; ++n) dir(0, n * B + b) += eta * g(rngs[std::size_t(b)]);
    x = std::sqrt(ab_next) * x0 + keep * dir;
  }
  return x;
}

/// Smallest mu(t) used when dividing by the signal scale near t = 1.
inline constexpr double kMinSignalScale = 1e-4;

/// Integrates t: 1 -> 0 with u_{t-dt} = r u_t + (sigma(t-dt) - r sigma(t)) eps,
/// r = mu(t-dt)/mu(t), evaluated through the clean estimate so mu(1) ~ 0 is safe.
inline Mat sample_sde(const EpsFn& eps_fn, const NoiseSchedule& sched, int steps, Eigen::Index length,
                      std::vector<Rng>& rngs, double clip = std::numeric_limits<double>::infinity()) {
  require(steps >= 1, "sample_sde: steps must be at least 1");
  require(!rngs.empty(), "sample_sde: need one generator per sample");
  Mat x = detail::gaussian_state(rngs, length);
  for (int k = steps; k >= 1; --k) {
    const double t = double(k) / steps, t_next = double(k - 1) / steps;
    const VpScaling now = vp_scalings(t, sched), next = vp_scalings(t_next, sched);
    const Mat eps = eps_fn(x, {t, now.mu * now.mu});
    const Mat x0 = detail::clean_estimate(x, eps, now.mu * now.mu, clip, kMinSignalScale);
    x = next.mu * x0 + next.sigma * eps;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Checkpoint-level inference

/// Network-backed eps predictor for a batch whose columns belong to `conds`.
inline EpsFn network_eps(const Checkpoint& ck, const nn::Denoiser& net, const std::vector<const Mat*>& conds) {
  return [&ck, &net, conds](const Mat& state, const NoiseLevel& level) {
    std::vector<Example> tmp;
    std::vector<const Example*> batch;
    tmp.reserve(conds.size());
    for (const Mat* c : conds) tmp.push_back({*c, Vec()});
    for (const auto& e : tmp) batch.push_back(&e);
    return net.forward(ck.params.ema, detail::pack_input(batch, state),
                       std::vector<double>(conds.size(), std::clamp(level.t, 0.0, 1.0)));
  };
}

inline Mat run_sampler(const SampleConfig& cfg, const EpsFn& eps, Eigen::Index length, std::vector<Rng>& rngs,
                       double clip) {
  const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.steps);
  switch (cfg.sampler) {
    case SamplerKind::ddpm: return sample_ddpm(eps, sched, length, rngs, clip);
    case SamplerKind::ddim: return sample_ddim(eps, sched, full_sequence(cfg.steps), cfg.eta, length, rngs, clip);
    case SamplerKind::sde: return sample_sde(eps, sched, cfg.steps, length, rngs, clip);
  }
  throw Error(ErrorKind::invalid_argument, "unknown sampler");
}

/// Columns processed together by one network call during sampling.
inline constexpr std::size_t kSampleBatch = 32;

/// Draws cfg.num_samples fields for every conditioning input. Sample s of input
/// i always uses generator seed derive_seed(seed, i, s) and the (input, sample)
/// pairs are chunked independently of `threads`, so results do not depend on it.
inline std::vector<std::vector<Vec>> sample_many(const Checkpoint& ck, const std::vector<Mat>& conds,
                                                 const SampleConfig& cfg, std::size_t threads = 1,
                                                 const std::vector<std::size_t>* input_ids = nullptr) {
  cfg.validate();
  require(ck.objective == Objective::epsilon, "sample: checkpoint is not a diffusion model");
  require(!input_ids || input_ids->size() == conds.size(), "sample: input id list size mismatch");
  const nn::Denoiser net(ck.params.config);
  const Eigen::Index N = Eigen::Index(ck.params.config.length);
  for (const auto& c : conds)
    require(std::size_t(c.rows()) + 1 == ck.params.config.in_channels && c.cols() == N,
            "sample: conditioning shape does not match the network");

  struct Job {
    std::size_t input, sample;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < conds.size(); ++i)
    for (std::size_t s = 0; s < cfg.num_samples; ++s) jobs.push_back({i, s});
  const std::size_t chunks = (jobs.size() + kSampleBatch - 1) / kSampleBatch;

  std::vector<std::vector<Vec>> out(conds.size(), std::vector<Vec>(cfg.num_samples));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      const std::size_t lo = c * kSampleBatch, hi = std::min(jobs.size(), lo + kSampleBatch);
      std::vector<const Mat*> batch;
      std::vector<Rng> rngs;
      for (std::size_t j = lo; j < hi; ++j) {
        batch.push_back(&conds[jobs[j].input]);
        const std::size_t id = input_ids ? (*input_ids)[jobs[j].input] : jobs[j].input;
        rngs.emplace_back(derive_seed(cfg.seed, id, jobs[j].sample));
      }
      const Mat x = run_sampler(cfg, network_eps(ck, net, batch), N, rngs, ck.x0_clip);
      for (std::size_t j = lo; j < hi; ++j)
        out[jobs[j].input][jobs[j].sample] = detail::unpack_row(x, Eigen::Index(j - lo), Eigen::Index(hi - lo));
    }
  };
  const std::size_t nt = std::max<std::size_t>(1, std::min(threads, chunks));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < nt; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

/// Deterministic prediction of the regression baseline.
inline std::vector<Vec> predict_regressor(const Checkpoint& ck, const std::vector<Mat>& conds) {
  require(ck.objective == Objective::regression, "predict: checkpoint is not a regressor");
  const nn::Denoiser net(ck.params.config);
  const Eigen::Index N = Eigen::Index(ck.params.config.length);
  std::vector<Vec> out;
  for (std::size_t lo = 0; lo < conds.size(); lo += kSampleBatch) {
    const std::size_t hi = std::min(conds.size(), lo + kSampleBatch);
    std::vector<Example> tmp;
    for (std::size_t i = lo; i < hi; ++i) tmp.push_back({conds[i], Vec()});
    std::vector<const Example*> batch;
    for (const auto& e : tmp) batch.push_back(&e);
    const Eigen::Index B = Eigen::Index(hi - lo);
    const Mat y = net.forward(ck.params.ema, detail::pack_input(batch, Mat::Zero(1, N * B)),
                              std::vector<double>(std::size_t(B), 0.0));
    for (Eigen::Index b = 0; b < B; ++b) out.push_back(detail::unpack_row(y, b, B));
  }
  return out;
}

}  // namespace hdl
