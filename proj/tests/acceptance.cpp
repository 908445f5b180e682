// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. The end-to-end criteria drive the built `hdl` binary.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include "hdl/pipeline.hpp"
#include "hdl/runtime.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hdl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

fs::path g_work;

void run_cli(const std::string& args) {
  const std::string cmd = std::string(HDL_BINARY) + " " + args;
  std::cerr << "+ hdl " << args << "\n";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw std::runtime_error("command failed: hdl " + args);
}

using Row = std::map<std::string, std::string>;

std::vector<Row> read_csv(const fs::path& p) {
  std::istringstream in(store::read_file(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> head;
  for (std::istringstream h(line); std::getline(h, line, ',');) head.push_back(line);
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r;
    std::istringstream cells(line);
    std::string cell;
    for (std::size_t k = 0; k < head.size() && std::getline(cells, cell, ','); ++k) {
      if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
      r[head[k]] = cell;
    }
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// 1 and 2: desk-scale end-to-end run through the CLI

fs::path e2e_dir() { return g_work / "desk_lowest"; }

void prepare_e2e() {
  static bool done = false;
  if (done) return;
  const double f = desk_profile().frequencies.front();
  fs::create_directories(e2e_dir());
  const auto cfg = e2e_dir() / "config.json";
  store::write_file(cfg, json{{"frequencies_hz", {f}}, {"out", e2e_dir().string()}}.dump(2) + "\n");
  for (const char* stage : {"gen-data", "train", "train-baseline", "eval", "ablate-samplers"})
    run_cli(std::string(stage) + " --config " + cfg.string());
  done = true;
}

Outcome criterion1() {
  prepare_e2e();
  std::map<std::string, double> v;
  for (const auto& r : read_csv(e2e_dir() / "eval.csv")) v[r.at("model") + "/" + r.at("metric")] = std::stod(r.at("mean"));
  const double dl2 = v.at("diffusion/rel_l2"), rl2 = v.at("regressor/rel_l2");
  const double den = v.at("diffusion/energy"), ren = v.at("regressor/energy");
  const bool ceiling = dl2 <= 0.10, order_l2 = dl2 < rl2, order_en = den < ren;
  return {ceiling && order_l2 && order_en,
          "diffusion rel L2 " + num(dl2) + (ceiling ? " <= 0.10" : " > 0.10") + ", regressor " + num(rl2) +
              (order_l2 ? " (diffusion lower)" : " (regressor lower)") + "; energy " + num(den) + " vs " + num(ren) +
              (order_en ? " (diffusion lower)" : " (regressor lower)")};
}

Outcome criterion2() {
  prepare_e2e();
  std::map<std::string, double> v;
  for (const auto& r : read_csv(e2e_dir() / "ablation.csv"))
    v[r.at("sampler") + "@" + r.at("steps")] = std::stod(r.at("mean"));
  const double c1000 = v.at("DDPM (cosine)@1000"), c10 = v.at("DDPM (cosine)@10"), l10 = v.at("DDPM (linear)@10");
  const bool a = c1000 <= c10, b = l10 >= 1.5 * c10;
  return {a && b, "DDPM-cosine T=1000 " + num(c1000) + ", T=10 " + num(c10) + "; DDPM-linear T=10 " + num(l10) +
                      " (ratio " + num(l10 / c10) + ")"};
}

// ---------------------------------------------------------------------------
// 3 to 7: oracle suites

Outcome criterion3() {
  const auto r = oracle::refinement_study();
  bool monotone = true, order = true;
  for (std::size_t i = 1; i < r.errors.size(); ++i) monotone = monotone && r.errors[i] < r.errors[i - 1];
  for (double p : r.orders) order = order && p >= 1.0;
  const double banded = oracle::banded_vs_dense(200, 7);
  std::string orders;
  for (double p : r.orders) orders += (orders.empty() ? "" : ", ") + num(p);
  return {monotone && order && banded <= 1e-12, "errors " + num(r.errors.front()) + " -> " + num(r.errors.back()) +
                                                    (monotone ? " monotone" : " NOT monotone") + ", orders [" + orders +
                                                    "], banded vs dense " + num(banded)};
}

Outcome criterion4() {
  double worst = 0;
  std::string at;
  for (std::uint64_t seed : {1, 2, 3})
    for (const auto& g : oracle::gradient_check(seed))
      if (g.rel >= worst) {
        worst = g.rel;
        at = g.group + " (seed " + std::to_string(seed) + ")";
      }
  return {worst <= 1e-5, "worst group error " + num(worst) + " at " + at};
}

Outcome criterion5() {
  const double ddpm = oracle::oracle_sampler_error(SamplerKind::ddpm, 1000);
  const double ddim = std::max(oracle::oracle_sampler_error(SamplerKind::ddim, 1000),
                               oracle::oracle_sampler_error(SamplerKind::ddim, 50));
  const double sde = oracle::oracle_sampler_error(SamplerKind::sde, 1000);
  return {ddpm <= 0.02 && ddim <= 1e-12 && sde <= 0.05,
          "DDPM " + num(ddpm) + ", DDIM " + num(ddim) + ", SDE " + num(sde)};
}

Outcome criterion6() {
  bool decreasing = true;
  double mismatch = 0;
  for (ScheduleKind k : {ScheduleKind::linear, ScheduleKind::cosine}) {
    const auto s = make_schedule(k, 1000);
    for (int t = 1; t <= s.T; ++t) decreasing = decreasing && s.alpha_bar(t) < s.alpha_bar(t - 1);
    mismatch = std::max(mismatch, oracle::continuous_mismatch(k, 1000));
  }
  const double z = oracle::forward_moment_zscore();
  const double parseval = oracle::parseval_gap();
  return {decreasing && z <= 3.0 && mismatch <= 5.0 / 1000 && parseval <= 1e-10,
          std::string("abar ") + (decreasing ? "strictly decreasing" : "NOT decreasing") + ", worst moment z " + num(z) +
              ", continuous mismatch " + num(mismatch) + " (bound 0.005), Parseval " + num(parseval)};
}

Outcome criterion7() {
  const std::size_t bad = oracle::grf_out_of_bounds(10000);
  const double gap = oracle::grf_midband_gap(500);
  return {bad == 0 && gap <= 0.10, std::to_string(bad) + " of 10000 fields out of bounds, mid-band gap " + num(gap)};
}

// ---------------------------------------------------------------------------
// 8 to 10: sensitivity and 2D solver

Outcome criterion8() {
  using namespace sensitivity;
  const RunConfig c = desk_profile();
  const auto st = homotopy_study_1d(c);
  const auto rep = run_homotopy(st, reference_evaluator(c.study_frequency()));
  const bool zero = rep.variance_vs_s.front() == 0.0;
  const double rho = spearman(st.s_grid, rep.variance_vs_s);
  double worst_int = 0;
  for (const auto& row : rep.kde)
    for (const auto& k : row) worst_int = std::max(worst_int, std::abs(k.integral() - 1.0));
  // Relative response change at the first nonzero s, averaged per probe class.
  double near = 0, far = 0;
  std::size_t nn = 0, nf = 0;
  for (std::size_t d = 0; d < st.directions.size(); ++d)
    for (std::size_t p = 0; p < st.probes.size(); ++p) {
      const auto u0 = rep.complex_responses[d][0][p], u1 = rep.complex_responses[d][1][p];
      const double rel = std::abs(u1 - u0) / std::abs(u0);
      (st.probes[p].tag == ProbeTag::far ? far : near) += rel;
      ++(st.probes[p].tag == ProbeTag::far ? nf : nn);
    }
  near /= double(nn);
  far /= double(nf);
  return {zero && rho >= 0.9 && worst_int <= 1e-3 && far > near,
          "variance at s=0 " + num(rep.variance_vs_s.front()) + ", Spearman " + num(rho) + ", worst KDE mass error " +
              num(worst_int) + ", |du/u0| at s=" + num(st.s_grid[1]) + ": far " + num(far) + " vs near " + num(near)};
}

Outcome criterion9() {
  const auto w = wkb_study_1d(desk_profile());
  bool slopes = true;
  double min_r2 = 1.0;
  for (const auto& fit : w.fit_vs_k) {
    slopes = slopes && fit.slope > 0;
    min_r2 = std::min(min_r2, fit.r2);
  }
  return {slopes && min_r2 >= 0.8 && w.certified,
          std::string("per-probe slopes vs k ") + (slopes ? "all positive" : "NOT all positive") + ", min R2 " +
              num(min_r2) + ", pooled R2 vs kx " + num(w.fit_vs_kx.r2) + ", C " + num(w.c_fit) +
              (w.certified ? " certifies all probes" : " does NOT certify all probes")};
}

Outcome criterion10() {
  const auto s = oracle::pml_study();
  return {s.interior_rel_l2 <= 0.05 && s.frame_ratio <= 0.01,
          "interior rel L2 vs 4x reference " + num(s.interior_rel_l2) + ", frame/peak " + num(s.frame_ratio) +
              " at sigma_max " + num(s.sigma_max)};
}

// ---------------------------------------------------------------------------
// 11: every command twice, CSVs compared byte for byte

Outcome criterion11() {
  const auto base = g_work / "repro";
  fs::remove_all(base);
  fs::create_directories(base);
  const auto cfg = base / "config.json";
  const json small = {{"frequencies_hz", {desk_profile().frequencies.front(), desk_profile().frequencies.back()}},
                      {"split", {{"train", 48}, {"val", 8}, {"test", 8}}},
                      {"model", {{"width", 8}, {"blocks", 2}}},
                      {"train", {{"epochs", 2}, {"batch_size", 16}}},
                      {"sample", {{"steps", 20}, {"samples", 2}}},
                      {"eval", {{"test_limit", 4}, {"ablation_steps", {5, 20}}, {"ablation_test_limit", 3},
                                {"ablation_samples", 2}}},
                      {"sensitivity", {{"directions", 6}, {"s_points", 5}}}};
  store::write_file(cfg, small.dump(2) + "\n");
  const std::vector<std::string> stages{"gen-data", "train", "train-baseline", "sample",
                                        "eval",     "ablate-samplers", "sensitivity", "report"};
  for (const char* run : {"a", "b"})
    for (const auto& stage : stages) run_cli(stage + " --config " + cfg.string() + " --out " + (base / run).string());
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++compared;
    const auto other = base / "b" / e.path().filename();
    if (!fs::exists(other) || store::read_file(e.path()) != store::read_file(other))
      differing.push_back(e.path().filename().string());
  }
  std::string detail = std::to_string(compared) + " CSV files compared";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {compared >= 8 && differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  g_work = fs::current_path() / "acceptance_runs";
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) g_work = argv[++i];
    else only.push_back(std::stoi(a));
  }
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1D end-to-end reproduction at desk scale", criterion1},
      {"sampler ablation ordering", criterion2},
      {"1D solver refinement and banded LU oracle", criterion3},
      {"gradient suite", criterion4},
      {"perfect-oracle sampler consistency", criterion5},
      {"schedule and forward-process invariants", criterion6},
      {"GRF bounds and spectrum", criterion7},
      {"sensitivity protocol", criterion8},
      {"WKB phase-accumulation scaling", criterion9},
      {"2D solver refinement and PML", criterion10},
      {"bit-identical reruns", criterion11},
  };
  std::vector<std::string> lines;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
         << " [" << std::fixed << std::setprecision(1) << secs << " s]";
    std::cout << line.str() << std::endl;
    lines.push_back(line.str());
    failed += o.pass ? 0 : 1;
  }
  std::cout << "\nSummary\n";
  for (const auto& l : lines) std::cout << l << "\n";
  std::cout << (lines.size() - std::size_t(failed)) << " of " << lines.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
