#pragma once

// End-to-end 1D workflow used by the command-line tool and the acceptance
// suite: dataset generation, example assembly, evaluation and ablations.

#include <atomic>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "hdl/config.hpp"
#include "hdl/diffusion.hpp"
#include "hdl/metrics.hpp"
#include "hdl/sensitivity.hpp"
#include "hdl/solver1d.hpp"
#include "hdl/store.hpp"

namespace hdl {

/// The 1D source is the Dirichlet point at x = 0.
inline constexpr GridIndex kSource1D{0, 0};

/// Per-record seeds depend only on (root seed, record index).
inline std::uint64_t record_seed(std::uint64_t root, std::uint64_t index) { return derive_seed(root, 0x6e6, index); }

inline store::Dataset generate_dataset(const RunConfig& cfg, double f_hz, std::size_t threads = 1) {
  cfg.validate();
  const GridShape shape = GridShape::line(cfg.grid_points);
  const std::size_t total = cfg.split.total();
  std::vector<store::DatasetRecord> records(total);
  std::vector<CoefficientField> fields(total);
  const auto mask = disk_mask(shape, kSource1D, 0.0);
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(total);
  auto work = [&] {
    for (std::size_t i; (i = next++) < total;) {
      try {
        fields[i] = sample_grf(shape, cfg.grf, record_seed(cfg.seed, i), cfg.dx());
        const auto w = solve_helmholtz_1d(fields[i], f_hz);
        records[i] = {i, fields[i].values, mask, w.values};
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::max<std::size_t>(1, threads); ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < total; ++i)
    if (!errors[i].empty()) throw Error(ErrorKind::generation_failure, "record " + std::to_string(i) + ": " + errors[i]);

  store::Dataset ds;
  ds.records = std::move(records);
  auto& m = ds.manifest;
  m.frequency_hz = f_hz;
  m.shape = shape;
  m.dx = cfg.dx();
  m.grf = cfg.grf;
  m.norm = dataset_norm_stats({fields.begin(), fields.begin() + std::ptrdiff_t(cfg.split.train)});
  m.split = cfg.split;
  m.root_seed = cfg.seed;
  m.record_count = total;
  m.source_center = kSource1D;
  m.source_radius = 0.0;
  return ds;
}

inline double omega_of(double f_hz) { return 2.0 * std::numbers::pi * f_hz; }

/// Network target: the real part of the wavefield divided by the source amplitude omega.
inline Vec training_target(const store::DatasetRecord& r, double omega) {
  Vec v(Eigen::Index(r.u.size()));
  for (std::size_t i = 0; i < r.u.size(); ++i) v[Eigen::Index(i)] = r.u[i].real() / omega;
  return v;
}

inline Mat record_conditioning(const store::Dataset& ds, const store::DatasetRecord& r, std::size_t levels) {
  CoefficientField c;
  c.shape = ds.manifest.shape;
  c.values = r.c;
  c.dx = ds.manifest.dx;
  return conditioning_matrix(
      build_conditioning(c, ds.manifest.source_center, ds.manifest.source_radius, levels, ds.manifest.norm));
}

struct SplitRange {
  std::size_t begin = 0, end = 0;
};

inline SplitRange train_range(const store::Dataset& d) { return {0, d.manifest.split.train}; }
inline SplitRange val_range(const store::Dataset& d) {
  return {d.manifest.split.train, d.manifest.split.train + d.manifest.split.val};
}
/// First `limit` records of the test split (all when limit is 0).
inline SplitRange test_range(const store::Dataset& d, std::size_t limit = 0) {
  const std::size_t b = d.manifest.split.train + d.manifest.split.val;
  const std::size_t n = limit ? std::min(limit, d.manifest.split.test) : d.manifest.split.test;
  return {b, b + n};
}

inline std::vector<Example> build_examples(const store::Dataset& ds, SplitRange r, std::size_t levels) {
  std::vector<Example> out;
  const double omega = omega_of(ds.manifest.frequency_hz);
  for (std::size_t i = r.begin; i < r.end; ++i)
    out.push_back({record_conditioning(ds, ds.records[i], levels), training_target(ds.records[i], omega)});
  return out;
}

inline Checkpoint train_on(const store::Dataset& ds, const RunConfig& cfg, Objective obj,
                           const EpochCallback& cb = {}) {
  const auto tr = build_examples(ds, train_range(ds), cfg.encoding_levels);
  const auto va = build_examples(ds, val_range(ds), cfg.encoding_levels);
  Checkpoint ck = train_model(tr, va, cfg.model, cfg.train, obj, cb);
  ck.norm = ds.manifest.norm;
  return ck;
}

// ---------------------------------------------------------------------------
// Evaluation

struct MetricSummary {
  std::string metric;
  double mean = 0.0, std = 0.0;
  std::size_t n = 0;
};

struct ModelEvaluation {
  std::string model;
  double frequency_hz = 0.0;
  std::vector<MetricSummary> metrics;  // rel_l2, rel_h1, energy

  const MetricSummary& get(const std::string& name) const {
    for (const auto& m : metrics)
      if (m.metric == name) return m;
    throw Error(ErrorKind::invalid_argument, "no metric " + name);
  }
};

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

/// predictions[i][s] for test inputs i and draws s. The reported mean is over
/// all pairs; std is the spread of the per-draw means across draws.
inline ModelEvaluation summarize_predictions(const std::string& model, const store::Dataset& ds, SplitRange r,
                                             const std::vector<std::vector<Vec>>& predictions) {
  const double omega = omega_of(ds.manifest.frequency_hz);
  const std::size_t S = predictions.empty() ? 0 : predictions[0].size();
  const char* names[3] = {"rel_l2", "rel_h1", "energy"};
  std::vector<std::vector<double>> per_draw(3, std::vector<double>(S, 0.0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& rec = ds.records[r.begin + i];
    const auto truth = to_std(training_target(rec, omega));
    for (std::size_t s = 0; s < S; ++s) {
      const auto pred = to_std(predictions[i][s]);
      per_draw[0][s] += metrics::rel_l2(pred, truth);
      per_draw[1][s] += metrics::rel_h1(pred, truth, ds.manifest.shape, ds.manifest.dx);
      per_draw[2][s] += metrics::rel_energy_error(pred, truth, rec.c, omega, ds.manifest.shape, ds.manifest.dx);
    }
  }
  ModelEvaluation ev;
  ev.model = model;
  ev.frequency_hz = ds.manifest.frequency_hz;
  for (int k = 0; k < 3; ++k) {
    for (double& v : per_draw[std::size_t(k)]) v /= double(predictions.size());
    const auto s = metrics::ErrorReport::summarize(per_draw[std::size_t(k)]);
    ev.metrics.push_back({names[k], s.mean, s.std, predictions.size()});
  }
  return ev;
}

inline std::vector<Mat> test_conditioning(const store::Dataset& ds, SplitRange r, std::size_t levels) {
  std::vector<Mat> conds;
  for (std::size_t i = r.begin; i < r.end; ++i) conds.push_back(record_conditioning(ds, ds.records[i], levels));
  return conds;
}

inline std::vector<std::size_t> record_ids(SplitRange r) {
  std::vector<std::size_t> ids;
  for (std::size_t i = r.begin; i < r.end; ++i) ids.push_back(i);
  return ids;
}

inline ModelEvaluation evaluate_diffusion(const Checkpoint& ck, const store::Dataset& ds, const SampleConfig& sc,
                                          std::size_t test_limit, std::size_t levels, std::size_t threads = 1) {
  const SplitRange r = test_range(ds, test_limit);
  const auto ids = record_ids(r);
  const auto samples = sample_many(ck, test_conditioning(ds, r, levels), sc, threads, &ids);
  return summarize_predictions("diffusion", ds, r, samples);
}

inline ModelEvaluation evaluate_regressor(const Checkpoint& ck, const store::Dataset& ds, std::size_t test_limit,
                                          std::size_t levels) {
  const SplitRange r = test_range(ds, test_limit);
  const auto pred = predict_regressor(ck, test_conditioning(ds, r, levels));
  std::vector<std::vector<Vec>> wrapped;
  for (const auto& p : pred) wrapped.push_back({p});
  return summarize_predictions("regressor", ds, r, wrapped);
}

// ---------------------------------------------------------------------------
// Sampler ablation

struct AblationVariant {
  std::string label;
  SamplerKind sampler;
  ScheduleKind schedule;
};

inline std::vector<AblationVariant> ablation_variants() {
  return {{"DDPM (linear)", SamplerKind::ddpm, ScheduleKind::linear},
          {"DDPM (cosine)", SamplerKind::ddpm, ScheduleKind::cosine},
          {"DDIM (cosine)", SamplerKind::ddim, ScheduleKind::cosine},
          {"SDE (cosine)", SamplerKind::sde, ScheduleKind::cosine}};
}

struct AblationCell {
  std::string label;
  int steps = 0;
  MetricSummary rel_l2;
};

inline AblationCell ablation_cell(const Checkpoint& ck, const store::Dataset& ds, const AblationVariant& v, int steps,
                                  const SampleConfig& base, std::size_t test_limit, std::size_t levels,
                                  std::size_t threads) {
  SampleConfig sc = base;
  sc.sampler = v.sampler;
  sc.schedule = v.schedule;
  sc.steps = steps;
  const auto ev = evaluate_diffusion(ck, ds, sc, test_limit, levels, threads);
  return {v.label, steps, ev.get("rel_l2")};
}

// ---------------------------------------------------------------------------
// Sensitivity studies

/// Homotopy between a GRF background and independent GRF directions on the
/// configured 1D grid, probed near the source and near the radiating end.
inline sensitivity::HomotopyStudy homotopy_study_1d(const RunConfig& c) {
  const GridShape shape = GridShape::line(c.grid_points);
  sensitivity::HomotopyStudy st;
  st.c0 = sample_grf(shape, c.grf, derive_seed(c.seed, 21), c.dx());
  for (std::size_t d = 0; d < c.sensitivity.directions; ++d)
    st.directions.push_back(sample_grf(shape, c.grf, derive_seed(c.seed, 22, d), c.dx()));
  st.s_grid = sensitivity::uniform_s_grid(c.sensitivity.s_points);
  st.probes = sensitivity::default_probes_1d(c.grid_points);
  return st;
}

inline sensitivity::Evaluator reference_evaluator(double f_hz) {
  return [f_hz](const CoefficientField& cf, std::size_t, std::size_t) { return solve_helmholtz_1d(cf, f_hz).values; };
}

/// Phase-accumulation scaling is checked on a constant medium with a uniform
/// one-signed speed shift, where the travel-time change does not cancel.
inline sensitivity::WkbReport wkb_study_1d(const RunConfig& c) {
  CoefficientField flat;
  flat.shape = GridShape::line(c.grid_points);
  flat.values.assign(c.grid_points, c.grf.c_bg);
  flat.dx = c.dx();
  const std::vector<double> dc(c.grid_points, c.sensitivity.wkb_perturbation * c.grf.c_bg);
  return sensitivity::wkb_check(c.frequencies, flat, dc, sensitivity::default_probes_1d(c.grid_points));
}

// ---------------------------------------------------------------------------
// CSV

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_eval_csv(const std::filesystem::path& path, const std::vector<ModelEvaluation>& evals) {
  std::ostringstream os;
  os << "frequency,model,metric,mean,std,n\n";
  for (const auto& e : evals)
    for (const auto& m : e.metrics)
      os << fmt(e.frequency_hz) << ',' << e.model << ',' << m.metric << ',' << fmt(m.mean) << ',' << fmt(m.std)
         << ',' << m.n << '\n';
  store::write_file(path, os.str());
}

}  // namespace hdl
