#pragma once

// Simulated ground-truth changes injected into target images.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diforge/raster.hpp"
#include "diforge/scene_sim.hpp"

namespace diforge {

enum class ChangeMethod { offset, statistical };
const char* to_string(ChangeMethod method) noexcept;
ChangeMethod parse_change_method(const std::string& text);

struct MaskOptions {
  double min_fraction = 0.01;  // raw blob area relative to the image
  double max_fraction = 0.05;
  Index min_pixels = 20;       // after intersecting with forest
  int max_retries = 50;
};

/// Union of 2-5 ellipses around a random forest pixel, clipped to forest.
/// Returns a one-channel {0,1} raster. Throws Errc::retries_exhausted.
Raster gen_mask(std::uint64_t seed, const Raster& class_map, const MaskOptions& options = {});

/// Adds `offset_db` to both bands inside the mask.
SarImage apply_offset_change(const SarImage& image, const Raster& mask, double offset_db);

/// Gaussian kernel density estimate over a sorted sample.
class Kde {
 public:
  Kde(Eigen::ArrayXd samples, double bandwidth);
  /// Silverman bandwidth 0.9 min(sigma, IQR/1.34) n^(-1/5), floored at 1e-3.
  /// Needs at least 10 samples.
  static Kde fit(Eigen::ArrayXd samples);
  static double silverman(const Eigen::ArrayXd& sorted);

  const Eigen::ArrayXd& samples() const noexcept { return samples_; }
  double bandwidth() const noexcept { return h_; }
  double lower() const noexcept { return samples_[0] - 5.0 * h_; }
  double upper() const noexcept { return samples_[samples_.size() - 1] + 5.0 * h_; }

  double cdf(double x) const;
  double pdf(double x) const;
  /// Root of cdf(x) = u on [lower, upper]; Newton steps guarded by bisection.
  double icdf(double u) const;

 private:
  Eigen::ArrayXd samples_;  // sorted ascending
  double h_;
};

inline double kde_cdf(const Kde& kde, double x) { return kde.cdf(x); }
inline double kde_icdf(const Kde& kde, double u) { return kde.icdf(u); }

inline constexpr double kCdfClamp = 1e-4;

/// Per-band pixel populations (dB).
using BandPopulations = std::array<Eigen::ArrayXd, 2>;

/// Values of `image` on pixels whose class is `land_class`, per band.
BandPopulations class_population(const SarImage& image, const Raster& class_map, LandClass land_class);

struct StatisticalChange {
  SarImage image;
  double mean_shift_db = 0.0;  // mean of (new - old) over masked pixels and both bands
};

/// Maps masked values through icdf_target(clamp(cdf_source(v))) per band.
StatisticalChange apply_statistical_change(const SarImage& image, const Raster& mask, const BandPopulations& source,
                                           const BandPopulations& target);

struct ChangeConfig {
  ChangeMethod method = ChangeMethod::offset;
  double offset_db = -2.5;
  LandClass target_class = kOpen;
  MaskOptions mask{};
};

struct ChangeResult {
  SarImage target;        // changed image
  Raster truth;           // one channel, union of the applied masks
  int requested = 0;      // k drawn from {0..3}
  int applied = 0;        // masks that could be generated
  double mean_shift_db = 0.0;
  std::vector<std::string> warnings;
};

/// Draws k ~ U{0..3} masks and applies the configured change to their union.
/// Mask seeds do not depend on the method, so both dataset variants share
/// geometry. Only the target image is modified.
ChangeResult simulate_changes(const SceneSample& sample, const Raster& class_map, std::uint64_t seed,
                              const ChangeConfig& config);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(Eigen::ArrayXd a, Eigen::ArrayXd b);

}  // namespace diforge
