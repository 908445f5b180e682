#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace hdl;

TEST(Fields, AcceptedFieldsStayInsideBounds) { EXPECT_EQ(oracle::grf_out_of_bounds(2000, 31), 0u); }

TEST(Fields, MidBandPowerMatchesEnvelope) { EXPECT_LE(oracle::grf_midband_gap(200, 64, 41), 0.10); }

TEST(Fields, SameSeedSameField) {
  const GrfHyperParams hp;
  const auto a = sample_grf(GridShape::line(128), hp, 99, 0.01);
  const auto b = sample_grf(GridShape::line(128), hp, 99, 0.01);
  const auto c = sample_grf(GridShape::line(128), hp, 100, 0.01);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  EXPECT_GE(a.alpha, hp.alpha_range.lo);
  EXPECT_LE(a.ell, hp.ell_range.hi);
}

TEST(Fields, RealizationHasZeroMean) {
  Rng rng(3);
  const GridShape s = GridShape::plane(16, 20);
  const auto u = grf_realization(s, spectral_envelope(wavenumber_grid(s), 1.5, 2.0), rng);
  double m = 0;
  for (double v : u) m += v;
  EXPECT_NEAR(m / double(u.size()), 0.0, 1e-14);
}

TEST(Fields, ImpossibleBoundsFailWithDiagnostics) {
  GrfHyperParams hp;
  hp.c_min = 1999.0;
  hp.c_max = 2001.0;
  hp.max_attempts = 5;
  try {
    sample_grf(GridShape::line(64), hp, 1, 0.01);
    FAIL() << "expected a generation failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::generation_failure);
    EXPECT_NE(std::string(e.what()).find("5 attempts"), std::string::npos);
  }
}

TEST(Fields, InvalidHyperparametersRejected) {
  GrfHyperParams hp;
  hp.c_bg = 3000.0;
  EXPECT_THROW(hp.validate(), Error);
  EXPECT_THROW(spectral_envelope({0.1}, -1.0, 1.0), Error);
}

TEST(Fields, ConditioningStackLayout) {
  auto c = oracle::constant_line(128, 2000.0, 1.0);
  c.values[5] = 2100.0;
  const auto z = build_conditioning(c, {0, 0}, 0.0, 4, {2000.0, 100.0});
  ASSERT_EQ(z.count(), conditioning_channels(1, 4));
  EXPECT_EQ(z.count(), 10u);
  EXPECT_DOUBLE_EQ(z.speed()[5], 1.0);
  EXPECT_DOUBLE_EQ(z.speed()[6], 0.0);
  EXPECT_DOUBLE_EQ(z.mask()[0], 1.0);
  EXPECT_DOUBLE_EQ(z.mask()[1], 0.0);
  // Level 2 sine: sin(4 pi x) at x = 16/128.
  EXPECT_NEAR(z.channels[6][16], std::sin(4 * std::numbers::pi * 16.0 / 128.0), 1e-15);
  EXPECT_EQ(conditioning_channels(2, 4), 18u);
}

TEST(Fields, DiskMaskInTwoDimensions) {
  const auto m = disk_mask(GridShape::plane(21, 21), {10, 10}, 2.0);
  double area = 0;
  for (double v : m) area += v;
  EXPECT_EQ(area, 13.0);
  EXPECT_THROW(disk_mask(GridShape::plane(21, 21), {1, 10}, 2.0), Error);
}

TEST(Fields, NormStatsPooled) {
  std::vector<CoefficientField> fs{oracle::constant_line(4, 1.0), oracle::constant_line(4, 3.0)};
  const auto s = dataset_norm_stats(fs);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, 1.0);
}
