#include <gtest/gtest.h>

#include "hdl/sensitivity.hpp"
#include "oracles.hpp"

using namespace hdl;
using namespace hdl::sensitivity;

namespace {

HomotopyStudy small_study(std::size_t directions, std::size_t s_points, std::size_t n = 128) {
  GrfHyperParams hp;
  const double dx = 1.0 / double(n - 1);
  HomotopyStudy st;
  st.c0 = sample_grf(GridShape::line(n), hp, 1, dx);
  for (std::size_t d = 0; d < directions; ++d) st.directions.push_back(sample_grf(GridShape::line(n), hp, 100 + d, dx));
  st.s_grid = uniform_s_grid(s_points);
  st.probes = default_probes_1d(n);
  return st;
}

Evaluator reference(double f_hz) {
  return [f_hz](const CoefficientField& c, std::size_t, std::size_t) { return solve_helmholtz_1d(c, f_hz).values; };
}

}  // namespace

TEST(Kde, IntegratesToOne) {
  Rng rng(2);
  std::normal_distribution<double> g(3.0, 0.5);
  for (std::size_t n : {2, 10, 100, 1000}) {
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    EXPECT_NEAR(kde(v).integral(), 1.0, 1e-3) << n;
  }
}

TEST(Kde, MatchesNormalDensity) {
  Rng rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(10000);
  for (auto& x : v) x = g(rng);
  const auto k = kde(v);
  double worst = 0;
  for (std::size_t i = 0; i < k.grid.size(); ++i) {
    const double x = k.grid[i];
    // A Gaussian kernel on normal data estimates the N(0, 1 + h^2) density.
    const double s2 = 1.0 + k.bandwidth * k.bandwidth;
    worst = std::max(worst, std::abs(k.density[i] - std::exp(-0.5 * x * x / s2) / std::sqrt(2 * std::numbers::pi * s2)));
  }
  // Pointwise sampling sd near the mode is about 0.009 for n = 1e4.
  EXPECT_LE(worst, 0.04);
}

TEST(Kde, IdenticalValuesAreASpike) {
  const auto k = kde({2.5, 2.5, 2.5});
  EXPECT_TRUE(k.degenerate);
  EXPECT_EQ(k.spike_at, 2.5);
  EXPECT_EQ(k.integral(), 1.0);
  EXPECT_THROW(kde({1.0}), Error);
}

TEST(Homotopy, ZeroInterpolationHasNoSpread) {
  const auto st = small_study(6, 5);
  const auto rep = run_homotopy(st, reference(40000.0), {3, {}});
  EXPECT_EQ(rep.variance_vs_s[0], 0.0);
  for (std::size_t p = 0; p < st.probes.size(); ++p) EXPECT_TRUE(rep.kde[0][p].degenerate);
  for (std::size_t d = 1; d < 6; ++d) EXPECT_EQ(rep.responses[d][0], rep.responses[0][0]);
  EXPECT_GT(rep.variance_vs_s.back(), 0.0);
}

TEST(Homotopy, ThreadCountDoesNotChangeResults) {
  const auto st = small_study(5, 3);
  const auto a = run_homotopy(st, reference(20000.0), {1, {}});
  const auto b = run_homotopy(st, reference(20000.0), {4, {}});
  EXPECT_EQ(a.responses, b.responses);
  EXPECT_EQ(a.variance_vs_s, b.variance_vs_s);
}

TEST(Homotopy, FailuresAreCollected) {
  const auto st = small_study(4, 3);
  const Evaluator flaky = [](const CoefficientField& c, std::size_t d, std::size_t s) {
    if (d == 2 && s == 1) throw Error(ErrorKind::singular_system, "boom");
    return solve_helmholtz_1d(c, 10000.0).values;
  };
  try {
    run_homotopy(st, flaky);
    FAIL() << "expected PartialReportError";
  } catch (const PartialReportError& e) {
    ASSERT_EQ(e.failures().size(), 1u);
    EXPECT_EQ(e.failures()[0].direction, 2u);
    EXPECT_GT(e.partial().variance_vs_s[2], 0.0);
  }
}

TEST(Homotopy, StudyValidation) {
  auto st = small_study(2, 3);
  st.s_grid = {0.0, 0.5};
  EXPECT_THROW(run_homotopy(st, reference(1000.0)), Error);
  st = small_study(2, 3);
  st.probes.push_back({{0, 500}, ProbeTag::far});
  EXPECT_THROW(run_homotopy(st, reference(1000.0)), Error);
}

TEST(Probes, OneDimensionalLayout) {
  const auto p = default_probes_1d(128);
  ASSERT_EQ(p.size(), 8u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p[i].tag, ProbeTag::near);
  for (std::size_t i = 4; i < 8; ++i) EXPECT_EQ(p[i].tag, ProbeTag::far);
  EXPECT_LT(p[3].at.col, p[4].at.col);
}

TEST(Wkb, ZeroPerturbationGivesZeroChange) {
  const auto c0 = oracle::constant_line(128, 2000.0);
  const auto rep = wkb_check({5000.0, 10000.0}, c0, std::vector<double>(128, 0.0), default_probes_1d(128));
  for (const auto& pt : rep.points) EXPECT_EQ(pt.rel_change, 0.0);
  EXPECT_TRUE(rep.certified);
}

TEST(Wkb, FarProbesTrackPhaseAccumulation) {
  const auto c0 = oracle::constant_line(128, 2000.0);
  const std::vector<double> dc(128, 10.0);
  const std::vector<double> f{3000.0, 5000.0, 10000.0, 15000.0, 20000.0};
  const auto rep = wkb_check(f, c0, dc, default_probes_1d(128));
  for (std::size_t p = 4; p < 8; ++p) {
    EXPECT_GT(rep.fit_vs_k[p].slope, 0.0);
    EXPECT_GE(rep.fit_vs_k[p].r2, 0.95);
  }
  EXPECT_THROW(wkb_check(f, c0, std::vector<double>(128, 100.0), default_probes_1d(128)), Error);
}

TEST(Statistics, SpearmanAndLinearFit) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 25, 100}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
  const auto f = fit_line({0, 1, 2}, {1, 3, 5});
  EXPECT_DOUBLE_EQ(f.slope, 2.0);
  EXPECT_DOUBLE_EQ(f.intercept, 1.0);
  EXPECT_DOUBLE_EQ(f.r2, 1.0);
}

TEST(PhaseCollapse, AttenuatesByGaussianFactor) {
  const std::vector<double> u{2.0, -4.0};
  const auto v = phase_collapse_demo(u, 2.0);
  EXPECT_NEAR(v[0], 2.0 * std::exp(-1.0), 1e-15);
  EXPECT_THROW(phase_collapse_demo(u, -1.0), Error);
}
