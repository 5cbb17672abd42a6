#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diforge/error.hpp"

namespace diforge {

using Index = Eigen::Index;

/// H x W x C grid of float values stored row-major as (row, col, channel).
///
/// Every public constructor rejects non-finite values. Callers writing
/// through `data()` are responsible for keeping the values finite.
class Raster {
 public:
  using ChannelView = Eigen::Map<const Eigen::ArrayXf, 0, Eigen::InnerStride<>>;
  using MutableChannelView = Eigen::Map<Eigen::ArrayXf, 0, Eigen::InnerStride<>>;

  Raster() = default;
  Raster(Index height, Index width, Index channels, float fill = 0.0f);
  Raster(Index height, Index width, Index channels, Eigen::ArrayXf data);

  Index height() const noexcept { return height_; }
  Index width() const noexcept { return width_; }
  Index channels() const noexcept { return channels_; }
  Index pixels() const noexcept { return height_ * width_; }
  Index size() const noexcept { return data_.size(); }

  float& operator()(Index row, Index col, Index channel) {
    return data_[(row * width_ + col) * channels_ + channel];
  }
  float operator()(Index row, Index col, Index channel) const {
    return data_[(row * width_ + col) * channels_ + channel];
  }

  const Eigen::ArrayXf& data() const noexcept { return data_; }
  Eigen::ArrayXf& data() noexcept { return data_; }

  /// Strided view over one channel, length height*width.
  ChannelView channel(Index c) const;
  MutableChannelView channel(Index c);

  bool same_grid(const Raster& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.channels_ == b.channels_ &&
           (a.data_ == b.data_).all();
  }

 private:
  Index height_ = 0;
  Index width_ = 0;
  Index channels_ = 0;
  Eigen::ArrayXf data_;
};

enum Band : Index { kVV = 0, kVH = 1 };

inline constexpr float kMinDb = -60.0f;
inline constexpr float kMaxDb = 20.0f;

/// Dual-polarisation backscatter image in dB (band 0 = VV, band 1 = VH).
class SarImage {
 public:
  SarImage() = default;
  /// Throws unless the raster has two channels and every value lies in
  /// [kMinDb, kMaxDb].
  explicit SarImage(Raster raster);
  /// Clamps into [kMinDb, kMaxDb] instead of rejecting.
  static SarImage clamped(Raster raster);

  const Raster& raster() const noexcept { return raster_; }
  Index height() const noexcept { return raster_.height(); }
  Index width() const noexcept { return raster_.width(); }
  float operator()(Index row, Index col, Index band) const { return raster_(row, col, band); }

  friend bool operator==(const SarImage& a, const SarImage& b) { return a.raster_ == b.raster_; }

 private:
  Raster raster_;
};

/// Per-acquisition metadata. Flattened order is fixed:
/// [mean_temp, snow_depth, orbit_ascending, incidence_angle, satellite_id,
///  precip(t), precip(t-1), precip(t-2), precip(t-3)].
struct AcquisitionConditions {
  static constexpr Index kLength = 9;

  double mean_temp = 0.0;        // deg C
  double snow_depth = 0.0;       // cm
  int orbit_ascending = 1;       // {0,1}
  double incidence_angle = 35.0; // deg
  int satellite_id = 1;          // 1 = S1A, 0 = S1B
  std::array<double, 4> precip{};  // mm, day t first

  std::array<double, kLength> flatten() const;
  static AcquisitionConditions unflatten(std::span<const double> values);
  void validate() const;

  friend bool operator==(const AcquisitionConditions&, const AcquisitionConditions&) = default;
};

/// Slot indices into a flattened condition block.
namespace slot {
inline constexpr Index kMeanTemp = 0;
inline constexpr Index kSnowDepth = 1;
inline constexpr Index kOrbit = 2;
inline constexpr Index kIncidence = 3;
inline constexpr Index kSatellite = 4;
inline constexpr Index kPrecip0 = 5;
}  // namespace slot

/// Binary slots pass through encode_conditions unscaled.
constexpr bool is_binary_slot(Index s) { return s == slot::kOrbit || s == slot::kSatellite; }

enum class SplitTag { train, test };
const char* to_string(SplitTag tag) noexcept;
SplitTag parse_split_tag(const std::string& text);

inline constexpr Index kPreviousImages = 4;
inline constexpr Index kStackChannels = 1 + 2 * kPreviousImages;
inline constexpr Index kConditionLength = (kPreviousImages + 1) * AcquisitionConditions::kLength;

struct SceneSample {
  Raster dem;  // one channel, meters
  std::array<SarImage, kPreviousImages> prev_images;  // oldest -> newest
  std::array<AcquisitionConditions, kPreviousImages> prev_conditions;
  SarImage target;
  AcquisitionConditions target_conditions;
  std::string sample_id;
  SplitTag split_tag = SplitTag::train;

  /// Checks that every raster shares the DEM grid; names the offender.
  void validate() const;
};

struct NormStats {
  std::array<double, kStackChannels> stack_mean{};
  std::array<double, kStackChannels> stack_std{};
  std::array<double, AcquisitionConditions::kLength> cond_mean{};
  std::array<double, AcquisitionConditions::kLength> cond_std{};
  std::array<double, 2> target_mean{};
  std::array<double, 2> target_std{};

  static NormStats identity();
  void validate() const;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double kStdFloor = 1e-6;

/// Random access to a collection of samples. Implementations may load
/// lazily, so `load` is the only way sample content is observed.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual SplitTag split(std::size_t index) const = 0;
  virtual SceneSample load(std::size_t index) const = 0;
};

/// In-memory source over a vector of samples.
class VectorSource final : public SampleSource {
 public:
  explicit VectorSource(std::vector<SceneSample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  SplitTag split(std::size_t i) const override { return samples_.at(i).split_tag; }
  SceneSample load(std::size_t i) const override { return samples_.at(i); }

 private:
  std::vector<SceneSample> samples_;
};

/// H x W x 9 standardized input stack: DEM, then VV/VH of I(t-4)..I(t-1).
Raster stack_inputs(const SceneSample& sample, const NormStats& stats);

/// 45-long condition vector: four previous blocks oldest first, target last.
Eigen::VectorXd encode_conditions(std::span<const AcquisitionConditions, kPreviousImages> prev,
                                  const AcquisitionConditions& target, const NormStats& stats);

/// Fits statistics on the training-split samples of `source` only.
NormStats fit_norm_stats(const SampleSource& source);

void write_raster(std::ostream& out, const Raster& raster);
Raster read_raster(std::istream& in);
void write_raster(const std::filesystem::path& path, const Raster& raster);
/// Rejects trailing bytes after the declared payload as `Errc::truncated`.
Raster read_raster(const std::filesystem::path& path);

/// 8-bit P5 export of one channel mapped linearly from [lo_db, hi_db].
void export_pgm(const Raster& raster, Index channel, double lo_db, double hi_db,
                const std::filesystem::path& path);
std::uint8_t pgm_level(double value, double lo, double hi);

}  // namespace diforge
