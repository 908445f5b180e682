#include <gtest/gtest.h>

#include "hdl/config.hpp"

using namespace hdl;

TEST(Config, DeskProfileKeepsFivePointsPerWavelength) {
  const auto c = desk_profile();
  c.validate();
  ASSERT_EQ(c.frequencies.size(), 5u);
  const double ppw = c.grf.c_min / (c.frequencies.back() * c.dx());
  EXPECT_NEAR(ppw, 5.0, 1e-9);
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(c.frequencies[i] / c.frequencies.back(), reference_frequencies()[i] / 1e6, 1e-12);
  EXPECT_EQ(c.split.total(), 2500u);
  EXPECT_EQ(c.model.in_channels, 11u);
}

TEST(Config, FullProfileUsesReferenceFrequencies) {
  const auto c = full_profile();
  c.validate();
  EXPECT_EQ(c.frequencies, reference_frequencies());
  EXPECT_GE(c.grf.c_min / (c.frequencies.back() * c.dx()), 5.0 - 1e-9);
}

TEST(Config, JsonRoundTripAndOverlay) {
  RunConfig c = desk_profile();
  c.seed = 42;
  c.train.epochs = 7;
  c.sample.sampler = SamplerKind::sde;
  RunConfig d = desk_profile();
  apply_json(d, to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));

  apply_json(d, json::parse(R"({"train": {"batch_size": 16}, "grf": {"c_min": 1500}})"));
  EXPECT_EQ(d.train.batch_size, 16u);
  EXPECT_EQ(d.train.epochs, 7u);
  EXPECT_EQ(d.grf.c_min, 1500.0);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  RunConfig c = desk_profile();
  EXPECT_THROW(apply_json(c, json::parse(R"({"epochs": 3})")), Error);
  EXPECT_THROW(apply_json(c, json::parse(R"({"seed": "abc"})")), Error);
  EXPECT_THROW(apply_json(c, json::parse(R"({"sample": {"sampler": "euler"}})")), Error);
  EXPECT_THROW(profile_by_name("cluster"), Error);
  c.frequencies.clear();
  EXPECT_THROW(c.validate(), Error);
}
