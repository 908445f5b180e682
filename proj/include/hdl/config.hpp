#pragma once

// Run configuration: every module default in one JSON-serializable record,
// with named profiles and flag overrides applied on top.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdl/diffusion.hpp"
#include "hdl/fields.hpp"
#include "hdl/store.hpp"

namespace hdl {

using json = nlohmann::json;

/// Reference frequencies (Hz) of the 1D study.
inline const std::vector<double>& reference_frequencies() {
  static const std::vector<double> f{1.5e5, 2.5e5, 5e5, 7.5e5, 1e6};
  return f;
}

struct SensitivityConfig {
  std::size_t directions = 100;
  std::size_t s_points = 21;
  /// Index into the frequency list studied by the homotopy run.
  int frequency_index = -1;  // -1: highest
  double wkb_perturbation = 0.005;  // ||dc||_inf / max c0
};

struct EvalConfig {
  /// Test inputs evaluated (0 = whole test split).
  std::size_t test_limit = 0;
  std::vector<int> ablation_steps{10, 50, 100, 1000};
  std::size_t ablation_test_limit = 20;
  std::size_t ablation_samples = 4;
};

struct RunConfig {
  std::string profile = "desk";
  std::string out = "runs";
  std::uint64_t seed = 1234;
  std::size_t threads = 1;
  std::size_t grid_points = 128;
  double domain_length = 1.0;
  GrfHyperParams grf;
  std::vector<double> frequencies;
  store::SplitSizes split{2000, 250, 250};
  std::size_t encoding_levels = 4;
  nn::DenoiserConfig model;
  TrainConfig train;
  SampleConfig sample;
  EvalConfig eval;
  SensitivityConfig sensitivity;

  double dx() const { return domain_length / double(grid_points - 1); }

  void validate() const {
    require(profile == "desk" || profile == "full", "profile must be desk or full");
    require(grid_points >= 16, "grid_points must be at least 16");
    require(domain_length > 0, "domain_length must be positive");
    require(!frequencies.empty(), "at least one frequency is required");
    for (double f : frequencies) require(std::isfinite(f) && f > 0, "frequencies must be positive");
    require(split.train > 0 && split.test > 0, "train and test splits must be nonempty");
    require(encoding_levels >= 1, "encoding_levels must be at least 1");
    require(threads >= 1, "threads must be at least 1");
    grf.validate();
    model.validate();
    train.validate();
    sample.validate();
    require(model.length == grid_points, "model length must equal grid_points");
    require(model.in_channels == 1 + conditioning_channels(1, encoding_levels),
            "model in_channels must be 1 + conditioning channels");
    require(sensitivity.directions >= 2 && sensitivity.s_points >= 2, "sensitivity needs >= 2 directions and s points");
  }

  double study_frequency() const {
    const int i = sensitivity.frequency_index;
    return i < 0 ? frequencies.back() : frequencies.at(std::size_t(i));
  }
};

/// Desk scale: N = 128 on [0, 1] with the reference frequencies scaled so the
/// highest keeps 5 points per wavelength at the slowest admissible speed.
inline RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  const double f_top = c.grf.c_min / (5.0 * c.dx());
  const double scale = f_top / reference_frequencies().back();
  for (double f : reference_frequencies()) c.frequencies.push_back(f * scale);
  c.model.length = c.grid_points;
  c.model.in_channels = 1 + conditioning_channels(1, c.encoding_levels);
  c.sensitivity.directions = 100;
  c.sensitivity.s_points = 21;
  c.eval.test_limit = 50;
  c.train.epochs = 300;
  return c;
}

/// Full scale: the unscaled frequencies, the full split sizes, and a grid
/// resolving the highest frequency at 5 points per wavelength.
inline RunConfig full_profile() {
  RunConfig c;
  c.profile = "full";
  c.frequencies = reference_frequencies();
  c.grid_points = std::size_t(std::ceil(5.0 * c.domain_length * c.frequencies.back() / c.grf.c_min)) + 1;
  c.split = {8190, 1020, 500};
  c.model.length = c.grid_points;
  c.model.in_channels = 1 + conditioning_channels(1, c.encoding_levels);
  c.train.epochs = 1000;
  c.eval.test_limit = 0;
  c.sensitivity.s_points = 100;
  return c;
}

inline RunConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "full") return full_profile();
  throw Error(ErrorKind::invalid_argument, "unknown profile '" + name + "'");
}

inline json to_json(const SampleConfig& s) {
  return {{"sampler", to_string(s.sampler)}, {"schedule", to_string(s.schedule)}, {"steps", s.steps},
          {"eta", s.eta},                    {"samples", s.num_samples},         {"seed", s.seed}};
}

inline json to_json(const RunConfig& c) {
  return {{"profile", c.profile},
          {"out", c.out},
          {"seed", c.seed},
          {"threads", c.threads},
          {"grid_points", c.grid_points},
          {"domain_length", c.domain_length},
          {"grf", store::to_json(c.grf)},
          {"frequencies_hz", c.frequencies},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
          {"encoding_levels", c.encoding_levels},
          {"model", store::to_json(c.model)},
          {"train", store::to_json(c.train)},
          {"sample", to_json(c.sample)},
          {"eval",
           {{"test_limit", c.eval.test_limit},
            {"ablation_steps", c.eval.ablation_steps},
            {"ablation_test_limit", c.eval.ablation_test_limit},
            {"ablation_samples", c.eval.ablation_samples}}},
          {"sensitivity",
           {{"directions", c.sensitivity.directions},
            {"s_points", c.sensitivity.s_points},
            {"frequency_index", c.sensitivity.frequency_index},
            {"wkb_perturbation", c.sensitivity.wkb_perturbation}}}};
}

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected so a
/// typo cannot silently fall back to a default.
inline void apply_json(RunConfig& c, const json& j) {
  static const std::vector<std::string> known{"profile", "out", "seed", "threads", "grid_points", "domain_length",
                                              "grf", "frequencies_hz", "split", "encoding_levels", "model", "train",
                                              "sample", "eval", "sensitivity"};
  require(j.is_object(), "config must be a JSON object");
  for (const auto& [k, v] : j.items())
    require(std::find(known.begin(), known.end(), k) != known.end(), "unknown config key '" + k + "'");
  try {
    if (j.contains("profile") && j["profile"] != c.profile) {
      const std::string p = j["profile"];
      c = profile_by_name(p);
    }
    c.out = j.value("out", c.out);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("grid_points")) {
      c.grid_points = j["grid_points"];
      c.model.length = c.grid_points;
    }
    c.domain_length = j.value("domain_length", c.domain_length);
    if (j.contains("grf")) {
      json merged = store::to_json(c.grf);
      merged.update(j["grf"]);
      c.grf = store::grf_from_json(merged);
    }
    if (j.contains("frequencies_hz")) c.frequencies = j["frequencies_hz"].get<std::vector<double>>();
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split = {s.value("train", c.split.train), s.value("val", c.split.val), s.value("test", c.split.test)};
    }
    if (j.contains("encoding_levels")) {
      c.encoding_levels = j["encoding_levels"];
      c.model.in_channels = 1 + conditioning_channels(1, c.encoding_levels);
    }
    if (j.contains("model")) {
      json merged = store::to_json(c.model);
      merged.update(j["model"]);
      c.model = store::arch_from_json(merged);
    }
    if (j.contains("train")) {
      json merged = store::to_json(c.train);
      merged.update(j["train"]);
      c.train = store::train_from_json(merged);
    }
    if (j.contains("sample")) {
      const auto& s = j["sample"];
      if (s.contains("sampler")) c.sample.sampler = parse_sampler_kind(s["sampler"]);
      if (s.contains("schedule")) c.sample.schedule = parse_schedule_kind(s["schedule"]);
      c.sample.steps = s.value("steps", c.sample.steps);
      c.sample.eta = s.value("eta", c.sample.eta);
      c.sample.num_samples = s.value("samples", c.sample.num_samples);
      c.sample.seed = s.value("seed", c.sample.seed);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      c.eval.test_limit = e.value("test_limit", c.eval.test_limit);
      if (e.contains("ablation_steps")) c.eval.ablation_steps = e["ablation_steps"].get<std::vector<int>>();
      c.eval.ablation_test_limit = e.value("ablation_test_limit", c.eval.ablation_test_limit);
      c.eval.ablation_samples = e.value("ablation_samples", c.eval.ablation_samples);
    }
    if (j.contains("sensitivity")) {
      const auto& s = j["sensitivity"];
      c.sensitivity.directions = s.value("directions", c.sensitivity.directions);
      c.sensitivity.s_points = s.value("s_points", c.sensitivity.s_points);
      c.sensitivity.frequency_index = s.value("frequency_index", c.sensitivity.frequency_index);
      c.sensitivity.wkb_perturbation = s.value("wkb_perturbation", c.sensitivity.wkb_perturbation);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("bad config value: ") + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path, const std::string& profile = "desk") {
  RunConfig c = profile_by_name(profile);
  const json j = json::parse(store::read_file(path), nullptr, false);
  require(!j.is_discarded(), "config " + path.string() + " is not valid JSON");
  apply_json(c, j);
  return c;
}

}  // namespace hdl
