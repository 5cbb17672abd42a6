#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "diforge/raster.hpp"

namespace diforge {

enum LandClass : int { kForest = 0, kOpen = 1, kWater = 2, kBare = 3 };
inline constexpr int kNumClasses = 4;

/// Ground spacing of the synthetic grid, used to turn DEM steps into slopes.
inline constexpr double kPixelSpacingM = 10.0;

struct World {
  Raster class_map;  // one channel, LandClass codes
  Raster dem;        // one channel, meters
  std::uint64_t seed = 0;

  LandClass class_at(Index pixel) const { return static_cast<LandClass>(class_map.data()[pixel]); }
};

struct WeatherParams {
  double mean_temp = 2.0;        // annual mean, deg C
  double seasonal_amplitude = 12.0;
  double season_length = 365.0;  // days
  double ar_coefficient = 0.7;
  double ar_sigma = 2.0;
  double dry_probability = 0.7;
  double wet_mean_mm = 4.0;
  double snow_cm_per_mm = 1.0;   // accumulation while freezing
  double melt_cm_per_degree = 3.0;
};

/// One acquisition per day; `dates[k].precip[j]` is the rainfall of day k-j.
struct WeatherSeries {
  std::vector<AcquisitionConditions> dates;
  std::uint64_t seed = 0;
};

struct BackscatterParams {
  using PerClassBand = std::array<std::array<double, 2>, kNumClasses>;

  PerClassBand base_db{};
  PerClassBand moisture_gain{};   // dB per mm effective moisture
  PerClassBand snow_gain{};       // dB per cm
  PerClassBand freeze_offset_db{};
  double slope_gain_db = 6.0;     // dB per unit projected slope
  std::array<std::array<double, 2>, 2> sat_bias_db{};  // [satellite_id][band]
  double looks = 4.0;
  double rho = 0.6;
  /// Test-only switch. Production rendering always applies speckle.
  bool speckle = true;

  static BackscatterParams defaults();
  void validate() const;
};

World gen_world(std::uint64_t seed, Index height, Index width);
WeatherSeries gen_weather(std::uint64_t seed, Index num_dates, const WeatherParams& params = {});

/// Sum over k of rho^k * precip[k].
double effective_moisture(const AcquisitionConditions& conds, double rho);

/// DEM slope projected onto the radar look direction and scaled by
/// sin(incidence). Positive values face the sensor.
Raster look_slope(const Raster& dem, const AcquisitionConditions& conds);

/// Noise-free backscatter in dB, before speckle and clamping.
Raster clean_backscatter(const World& world, const AcquisitionConditions& conds, const BackscatterParams& params);

SarImage render_sar(const World& world, const AcquisitionConditions& conds, const BackscatterParams& params,
                    std::uint64_t noise_seed);

/// Noise seed used for the acquisition on `date_index` of a world.
std::uint64_t date_noise_seed(const World& world, Index date_index);

/// Window ending at `date_index`: I(t-4)..I(t-1) plus the target I(t).
SceneSample gen_scene_series(const World& world, const WeatherSeries& weather, const BackscatterParams& params,
                             Index date_index);

}  // namespace diforge
