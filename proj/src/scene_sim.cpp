#include "diforge/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "diforge/rng.hpp"

namespace diforge {

namespace {

using Field = Eigen::ArrayXXd;  // (row, col)

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Lattice value noise with `octaves` octaves, rescaled to [0, 1].
Field value_noise(Rng& rng, Index height, Index width, double cell, int octaves) {
  Field out = Field::Zero(height, width);
  double amplitude = 1.0;
  for (int o = 0; o < octaves; ++o) {
    const Index gh = static_cast<Index>(std::ceil(height / cell)) + 2;
    const Index gw = static_cast<Index>(std::ceil(width / cell)) + 2;
    Field lattice(gh, gw);
    for (Index i = 0; i < lattice.size(); ++i) lattice(i) = uniform01(rng);
    for (Index r = 0; r < height; ++r) {
      const double fy = r / cell;
      const auto iy = static_cast<Index>(fy);
      const double ty = smoothstep(fy - static_cast<double>(iy));
      for (Index c = 0; c < width; ++c) {
        const double fx = c / cell;
        const auto ix = static_cast<Index>(fx);
        const double tx = smoothstep(fx - static_cast<double>(ix));
        const double top = lattice(iy, ix) * (1 - tx) + lattice(iy, ix + 1) * tx;
        const double bottom = lattice(iy + 1, ix) * (1 - tx) + lattice(iy + 1, ix + 1) * tx;
        out(r, c) += amplitude * (top * (1 - ty) + bottom * ty);
      }
    }
    amplitude *= 0.5;
    cell = std::max(2.0, cell * 0.5);
  }
  const double lo = out.minCoeff();
  const double hi = out.maxCoeff();
  return hi > lo ? Field((out - lo) / (hi - lo)) : Field(Field::Zero(height, width));
}

double quantile_of(const Field& f, double q) {
  std::vector<double> v(f.data(), f.data() + f.size());
  const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

/// Row-major flattening of an Eigen (column-major) field into a raster.
Raster to_raster(const Field& f) {
  Raster r(f.rows(), f.cols(), 1);
  for (Index row = 0; row < f.rows(); ++row)
    for (Index col = 0; col < f.cols(); ++col) r(row, col, 0) = static_cast<float>(f(row, col));
  return r;
}

bool try_world(std::uint64_t seed, int attempt, Index height, Index width, World& world) {
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(attempt)});

  // Terrain: rolling noise plus a few steep hills.
  Field dem = 30.0 * value_noise(rng, height, width, 16.0, 3);
  std::uniform_int_distribution<int> hill_count(2, 5);
  const int hills = hill_count(rng);
  for (int h = 0; h < hills; ++h) {
    const double cy = uniform01(rng) * static_cast<double>(height);
    const double cx = uniform01(rng) * static_cast<double>(width);
    const double peak = 40.0 + 40.0 * uniform01(rng);
    const double sigma = 3.0 + 3.0 * uniform01(rng);
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c) {
        const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
        dem(r, c) += peak * std::exp(-0.5 * d2 / (sigma * sigma));
      }
  }

  const Field lake = value_noise(rng, height, width, 14.0, 2);
  const Field vegetation = value_noise(rng, height, width, 10.0, 3);
  const Field rock = value_noise(rng, height, width, 8.0, 2);
  const double low_ground = quantile_of(dem, 0.4);
  const double high_ground = quantile_of(dem, 0.9);

  Field classes(height, width);
  for (Index r = 0; r < height; ++r)
    for (Index c = 0; c < width; ++c) {
      LandClass k = vegetation(r, c) > 0.45 ? kForest : kOpen;
      if (dem(r, c) >= high_ground && rock(r, c) > 0.5) k = kBare;
      if (dem(r, c) <= low_ground && lake(r, c) < 0.3) k = kWater;
      classes(r, c) = k;
    }

  const double n = static_cast<double>(height * width);
  const double forest = (classes == static_cast<double>(kForest)).cast<double>().sum() / n;
  const double open = (classes == static_cast<double>(kOpen)).cast<double>().sum() / n;
  if (forest < 0.05 || open < 0.05) return false;

  world.class_map = to_raster(classes);
  world.dem = to_raster(dem);
  world.seed = seed;
  return true;
}

}  // namespace

BackscatterParams BackscatterParams::defaults() {
  BackscatterParams p;
  // base VV; VH sits 7 dB lower except water.
  p.base_db[kForest] = {-8.0, -15.0};
  p.base_db[kOpen] = {-10.3, -17.3};
  p.base_db[kWater] = {-20.0, -26.0};
  p.base_db[kBare] = {-10.0, -17.0};
  p.moisture_gain[kForest] = {0.02, 0.02};
  p.moisture_gain[kOpen] = {0.08, 0.08};
  p.moisture_gain[kWater] = {0.0, 0.0};
  p.moisture_gain[kBare] = {0.05, 0.05};
  for (auto& g : p.snow_gain) g = {-0.05, -0.05};
  p.freeze_offset_db[kForest] = {-2.0, -2.0};
  p.freeze_offset_db[kOpen] = {-2.0, -2.0};
  p.slope_gain_db = 6.0;
  p.sat_bias_db[0] = {-0.3, -0.3};  // S1B
  p.sat_bias_db[1] = {0.0, 0.0};    // S1A
  p.looks = 4.0;
  p.rho = 0.6;
  return p;
}

void BackscatterParams::validate() const {
  for (int b = 0; b < 2; ++b) {
    require(moisture_gain[kOpen][b] > moisture_gain[kForest][b] && moisture_gain[kForest][b] >= 0.0,
            Errc::invalid_argument, "moisture gain must satisfy open > forest >= 0");
  }
  require(looks >= 1.0, Errc::invalid_argument, "equivalent number of looks must be >= 1");
  require(rho > 0.0 && rho < 1.0, Errc::invalid_argument, "moisture decay rho must lie in (0, 1)");
}

World gen_world(std::uint64_t seed, Index height, Index width) {
  require(height >= 16 && width >= 16, Errc::invalid_argument, "world must be at least 16x16");
  World world;
  for (int attempt = 0; attempt < 100; ++attempt) {
    if (try_world(seed, attempt, height, width, world)) return world;
  }
  throw Error(Errc::retries_exhausted, "no world with >= 5% forest and open after 100 attempts");
}

WeatherSeries gen_weather(std::uint64_t seed, Index num_dates, const WeatherParams& params) {
  require(num_dates >= 5, Errc::invalid_argument, "weather series needs at least 5 dates");
  Rng rng = make_rng(seed, {0x77});
  std::normal_distribution<double> noise(0.0, params.ar_sigma);
  std::exponential_distribution<double> wet(1.0 / params.wet_mean_mm);

  // Three extra leading days feed the precipitation history of date 0.
  std::vector<double> rain(static_cast<std::size_t>(num_dates + 3));
  for (double& p : rain) p = uniform01(rng) < params.dry_probability ? 0.0 : wet(rng);

  const double phase = uniform01(rng) * params.season_length;
  static constexpr std::array<double, 3> kIncidences = {30.5, 36.2, 41.9};
  std::uniform_int_distribution<int> pick_incidence(0, 2);

  WeatherSeries series;
  series.seed = seed;
  series.dates.resize(static_cast<std::size_t>(num_dates));
  double anomaly = 0.0;
  double snow = 0.0;
  int orbit = uniform01(rng) < 0.5 ? 1 : 0;
  int run = 1;
  int satellite = uniform01(rng) < 0.5 ? 1 : 0;
  for (Index k = 0; k < num_dates; ++k) {
    auto& c = series.dates[static_cast<std::size_t>(k)];
    anomaly = params.ar_coefficient * anomaly + noise(rng);
    c.mean_temp = params.mean_temp +
                  params.seasonal_amplitude *
                      std::sin(2.0 * std::numbers::pi * (static_cast<double>(k) + phase) / params.season_length) +
                  anomaly;
    for (std::size_t j = 0; j < 4; ++j) c.precip[j] = rain[static_cast<std::size_t>(k + 3) - j];
    if (c.mean_temp < 0.0) {
      snow += params.snow_cm_per_mm * c.precip[0];
    } else {
      snow = std::max(0.0, snow - params.melt_cm_per_degree * c.mean_temp);
    }
    c.snow_depth = snow;

    // Orbits mostly alternate; runs never exceed two so that every window of
    // four acquisitions contains both directions.
    if (k > 0) {
      const bool flip = run >= 2 || uniform01(rng) < 0.75;
      if (flip) {
        orbit = 1 - orbit;
        run = 1;
      } else {
        ++run;
      }
    }
    c.orbit_ascending = orbit;
    c.incidence_angle = kIncidences[static_cast<std::size_t>(pick_incidence(rng))] + (uniform01(rng) - 0.5);
    c.satellite_id = satellite;
    satellite = 1 - satellite;
  }
  return series;
}

double effective_moisture(const AcquisitionConditions& conds, double rho) {
  double m = 0.0;
  double w = 1.0;
  for (double p : conds.precip) {
    m += w * p;
    w *= rho;
  }
  return m;
}

Raster look_slope(const Raster& dem, const AcquisitionConditions& conds) {
  const Index h = dem.height();
  const Index w = dem.width();
  Raster s(h, w, 1);
  // Right-looking sensor: ascending passes look east, so slopes rising to the
  // east face the sensor; descending passes look west.
  const double direction = conds.orbit_ascending ? 1.0 : -1.0;
  const double scale = direction * std::sin(conds.incidence_angle * std::numbers::pi / 180.0);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const Index left = std::max<Index>(c - 1, 0);
      const Index right = std::min<Index>(c + 1, w - 1);
      const double run = static_cast<double>(right - left) * kPixelSpacingM;
      const double grad = run > 0.0 ? (dem(r, right, 0) - dem(r, left, 0)) / run : 0.0;
      s(r, c, 0) = static_cast<float>(scale * grad);
    }
  return s;
}

Raster clean_backscatter(const World& world, const AcquisitionConditions& conds, const BackscatterParams& params) {
  const Raster slope = look_slope(world.dem, conds);
  const double m = effective_moisture(conds, params.rho);
  const bool freezing = conds.mean_temp < 0.0;
  const auto sat = static_cast<std::size_t>(conds.satellite_id);
  Raster out(world.dem.height(), world.dem.width(), 2);
  for (Index p = 0; p < out.pixels(); ++p) {
    const auto k = static_cast<std::size_t>(world.class_at(p));
    for (std::size_t b = 0; b < 2; ++b) {
      double db = params.base_db[k][b] + params.moisture_gain[k][b] * m + params.snow_gain[k][b] * conds.snow_depth +
                  params.slope_gain_db * slope.data()[p] + params.sat_bias_db[sat][b];
      if (freezing) db += params.freeze_offset_db[k][b];
      out.data()[p * 2 + static_cast<Index>(b)] = static_cast<float>(db);
    }
  }
  return out;
}

SarImage render_sar(const World& world, const AcquisitionConditions& conds, const BackscatterParams& params,
                    std::uint64_t noise_seed) {
  params.validate();
  conds.validate();
  Raster img = clean_backscatter(world, conds, params);
  if (params.speckle) {
    Rng rng = make_rng(noise_seed);
    std::gamma_distribution<double> speckle(params.looks, 1.0 / params.looks);
    for (Index i = 0; i < img.size(); ++i) {
      const double power = std::pow(10.0, img.data()[i] / 10.0) * speckle(rng);
      img.data()[i] = static_cast<float>(10.0 * std::log10(power));
    }
  }
  return SarImage::clamped(std::move(img));
}

std::uint64_t date_noise_seed(const World& world, Index date_index) {
  return derive_seed(world.seed, {0x5a5ULL, static_cast<std::uint64_t>(date_index)});
}

SceneSample gen_scene_series(const World& world, const WeatherSeries& weather, const BackscatterParams& params,
                             Index date_index) {
  require(date_index >= kPreviousImages && date_index < static_cast<Index>(weather.dates.size()),
          Errc::invalid_argument,
          "date index " + std::to_string(date_index) + " outside [4, " + std::to_string(weather.dates.size()) + ")");
  SceneSample s;
  s.dem = world.dem;
  for (Index i = 0; i < kPreviousImages; ++i) {
    const Index d = date_index - kPreviousImages + i;
    const auto& c = weather.dates[static_cast<std::size_t>(d)];
    s.prev_images[static_cast<std::size_t>(i)] = render_sar(world, c, params, date_noise_seed(world, d));
    s.prev_conditions[static_cast<std::size_t>(i)] = c;
  }
  s.target_conditions = weather.dates[static_cast<std::size_t>(date_index)];
  s.target = render_sar(world, s.target_conditions, params, date_noise_seed(world, date_index));
  s.sample_id = "d" + std::to_string(date_index);
  return s;
}

}  // namespace diforge
