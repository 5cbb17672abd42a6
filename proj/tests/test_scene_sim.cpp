#include <gtest/gtest.h>

#include <cmath>

#include "diforge/scene_sim.hpp"
#include "test_util.hpp"

using namespace diforge;

TEST(SceneSim, WorldsAreDeterministicPerSeed) {
  const World a = gen_world(5, 32, 32);
  const World b = gen_world(5, 32, 32);
  const World c = gen_world(6, 32, 32);
  EXPECT_EQ(a.class_map, b.class_map);
  EXPECT_EQ(a.dem, b.dem);
  EXPECT_FALSE(a.dem == c.dem);
}

TEST(SceneSim, WorldsContainForestAndOpen) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const World w = gen_world(seed, 32, 32);
    const auto& d = w.class_map.data();
    EXPECT_GE((d == kForest).count(), 0.05 * 1024) << seed;
    EXPECT_GE((d == kOpen).count(), 0.05 * 1024) << seed;
    EXPECT_TRUE(((d >= 0) && (d < kNumClasses)).all());
  }
  EXPECT_THROW(gen_world(1, 8, 32), Error);
}

TEST(SceneSim, WeatherIsPhysicallyPlausible) {
  const WeatherSeries w = gen_weather(11, 400);
  ASSERT_EQ(w.dates.size(), 400u);
  int run = 1;
  for (std::size_t k = 0; k < w.dates.size(); ++k) {
    const auto& c = w.dates[k];
    EXPECT_NO_THROW(c.validate());
    if (k > 0) {
      EXPECT_NE(c.satellite_id, w.dates[k - 1].satellite_id);
      run = c.orbit_ascending == w.dates[k - 1].orbit_ascending ? run + 1 : 1;
      EXPECT_LE(run, 2) << "orbit run at date " << k;
      // Precipitation history shifts by one day per date.
      for (std::size_t j = 1; j < 4; ++j) EXPECT_EQ(c.precip[j], w.dates[k - 1].precip[j - 1]);
      if (c.mean_temp >= 0.0) {
        EXPECT_LE(c.snow_depth, w.dates[k - 1].snow_depth);
      }
    }
  }
}

TEST(SceneSim, EffectiveMoistureIsDecayedSum) {
  AcquisitionConditions c;
  c.precip = {10, 0, 5, 1};
  EXPECT_NEAR(effective_moisture(c, 0.6), 10 + 5 * 0.36 + 1 * 0.216, 1e-12);
}

TEST(SceneSim, LookSlopeFollowsOrbitDirection) {
  // DEM rising 1 m per pixel eastward: gradient 0.1.
  Raster dem(3, 5, 1);
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 5; ++c) dem(r, c, 0) = static_cast<float>(c);
  AcquisitionConditions asc;
  asc.orbit_ascending = 1;
  asc.incidence_angle = 30.0;
  AcquisitionConditions desc = asc;
  desc.orbit_ascending = 0;
  const Raster sa = look_slope(dem, asc);
  const Raster sd = look_slope(dem, desc);
  for (Index i = 0; i < sa.size(); ++i) {
    EXPECT_NEAR(sa.data()[i], 0.05, 1e-6);
    EXPECT_NEAR(sd.data()[i], -0.05, 1e-6);
  }
}

TEST(SceneSim, CleanBackscatterMatchesHandComputation) {
  World w = gen_world(3, 16, 16);
  w.dem = Raster(16, 16, 1, 10.0f);  // flat
  BackscatterParams p = BackscatterParams::defaults();
  AcquisitionConditions c;
  c.mean_temp = -1.0;
  c.snow_depth = 4.0;
  c.precip = {2, 1, 0, 0};
  c.satellite_id = 0;
  const Raster img = clean_backscatter(w, c, p);
  const double m = 2 + 0.6;
  for (Index px = 0; px < img.pixels(); ++px) {
    const auto k = static_cast<std::size_t>(w.class_at(px));
    for (Index b = 0; b < 2; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      const double want = p.base_db[k][ub] + p.moisture_gain[k][ub] * m - 0.05 * 4.0 - 0.3 +
                          p.freeze_offset_db[k][ub];
      EXPECT_NEAR(img.data()[px * 2 + b], want, 1e-5);
    }
  }
}

TEST(SceneSim, MoistureRaisesOpenMoreThanForest) {
  const World w = gen_world(9, 32, 32);
  BackscatterParams p = BackscatterParams::defaults();
  AcquisitionConditions dry, wet;
  wet.precip = {20, 0, 0, 0};
  const Raster a = clean_backscatter(w, dry, p);
  const Raster b = clean_backscatter(w, wet, p);
  for (Index px = 0; px < a.pixels(); ++px) {
    const double delta = b.data()[px * 2] - a.data()[px * 2];
    switch (w.class_at(px)) {
      case kOpen: EXPECT_NEAR(delta, 1.6, 1e-4); break;
      case kForest: EXPECT_NEAR(delta, 0.4, 1e-4); break;
      case kWater: EXPECT_NEAR(delta, 0.0, 1e-5); break;
      default: break;
    }
  }
}

TEST(SceneSim, SpeckleHasGammaStatistics) {
  World w = gen_world(4, 64, 64);
  w.dem = Raster(64, 64, 1, 0.0f);
  w.class_map = Raster(64, 64, 1, static_cast<float>(kOpen));
  BackscatterParams p = BackscatterParams::defaults();
  AcquisitionConditions c;
  const SarImage img = render_sar(w, c, p, 123);
  // Linear intensity ratio to the clean value is Gamma(L, 1/L): mean 1, var 1/L.
  const double clean = std::pow(10.0, p.base_db[kOpen][0] / 10.0);
  double sum = 0.0, sq = 0.0;
  const Index n = img.raster().pixels();
  for (Index i = 0; i < n; ++i) {
    const double r = std::pow(10.0, img.raster().data()[i * 2] / 10.0) / clean;
    sum += r;
    sq += r * r;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  EXPECT_NEAR(mean, 1.0, 0.03);
  EXPECT_NEAR(var, 1.0 / p.looks, 0.03);

  EXPECT_EQ(render_sar(w, c, p, 123), img);
  EXPECT_FALSE(render_sar(w, c, p, 124) == img);
}

TEST(SceneSim, SeriesWindowUsesConsecutiveDates) {
  const World w = gen_world(2, 16, 16);
  const WeatherSeries weather = gen_weather(3, 12);
  const SceneSample s = gen_scene_series(w, weather, BackscatterParams::defaults(), 7);
  EXPECT_NO_THROW(s.validate());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.prev_conditions[i], weather.dates[3 + i]);
  EXPECT_EQ(s.target_conditions, weather.dates[7]);
  // Same date rendered through another window gives the same image.
  const SceneSample later = gen_scene_series(w, weather, BackscatterParams::defaults(), 8);
  EXPECT_EQ(later.prev_images[3], s.target);
  EXPECT_THROW(gen_scene_series(w, weather, BackscatterParams::defaults(), 3), Error);
  EXPECT_THROW(gen_scene_series(w, weather, BackscatterParams::defaults(), 12), Error);
}

TEST(SceneSim, ParamsValidation) {
  BackscatterParams p = BackscatterParams::defaults();
  EXPECT_NO_THROW(p.validate());
  p.moisture_gain[kOpen] = {0.01, 0.01};
  EXPECT_THROW(p.validate(), Error);
  p = BackscatterParams::defaults();
  p.looks = 0.5;
  EXPECT_THROW(p.validate(), Error);
}
