#include "diforge/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace diforge {

static_assert(std::endian::native == std::endian::little, "DRAS I/O assumes a little-endian host");

namespace {

constexpr char kRasterMagic[4] = {'D', 'R', 'A', 'S'};
constexpr std::uint32_t kRasterVersion = 1;
// Refuse to allocate more than 2^31 floats from a header.
constexpr std::uint64_t kMaxRasterElements = 1ULL << 31;

void check_dims(Index height, Index width, Index channels) {
  require(height >= 0 && width >= 0 && channels >= 0, Errc::invalid_argument, "negative raster dimension");
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

}  // namespace

Raster::Raster(Index height, Index width, Index channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  require(std::isfinite(fill), Errc::non_finite, "raster fill value");
  data_ = Eigen::ArrayXf::Constant(height * width * channels, fill);
}

Raster::Raster(Index height, Index width, Index channels, Eigen::ArrayXf data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  require(data_.size() == height * width * channels, Errc::dimension_mismatch,
          "raster data length " + std::to_string(data_.size()) + " != " + std::to_string(height) + "x" +
              std::to_string(width) + "x" + std::to_string(channels));
  require(all_finite(), Errc::non_finite, "raster contains NaN or infinity");
}

Raster::ChannelView Raster::channel(Index c) const {
  require(c >= 0 && c < channels_, Errc::invalid_argument, "channel " + std::to_string(c) + " out of range");
  return ChannelView(data_.data() + c, pixels(), Eigen::InnerStride<>(channels_));
}

Raster::MutableChannelView Raster::channel(Index c) {
  require(c >= 0 && c < channels_, Errc::invalid_argument, "channel " + std::to_string(c) + " out of range");
  return MutableChannelView(data_.data() + c, pixels(), Eigen::InnerStride<>(channels_));
}

SarImage::SarImage(Raster raster) : raster_(std::move(raster)) {
  require(raster_.channels() == 2, Errc::dimension_mismatch,
          "SAR image needs 2 channels, got " + std::to_string(raster_.channels()));
  require(raster_.all_finite(), Errc::non_finite, "SAR image");
  if (raster_.size() > 0) {
    require(raster_.data().minCoeff() >= kMinDb && raster_.data().maxCoeff() <= kMaxDb, Errc::invalid_argument,
            "SAR values outside [-60, 20] dB");
  }
}

SarImage SarImage::clamped(Raster raster) {
  raster.data() = raster.data().max(kMinDb).min(kMaxDb);
  return SarImage(std::move(raster));
}

std::array<double, AcquisitionConditions::kLength> AcquisitionConditions::flatten() const {
  return {mean_temp, snow_depth, static_cast<double>(orbit_ascending), incidence_angle,
          static_cast<double>(satellite_id), precip[0], precip[1], precip[2], precip[3]};
}

AcquisitionConditions AcquisitionConditions::unflatten(std::span<const double> v) {
  require(static_cast<Index>(v.size()) == kLength, Errc::dimension_mismatch, "condition block must have 9 values");
  AcquisitionConditions c;
  c.mean_temp = v[0];
  c.snow_depth = v[1];
  c.orbit_ascending = static_cast<int>(v[2]);
  c.incidence_angle = v[3];
  c.satellite_id = static_cast<int>(v[4]);
  for (int k = 0; k < 4; ++k) c.precip[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(5 + k)];
  c.validate();
  return c;
}

void AcquisitionConditions::validate() const {
  require(std::isfinite(mean_temp), Errc::non_finite, "mean_temp");
  require(std::isfinite(snow_depth) && snow_depth >= 0.0, Errc::invalid_argument, "snow_depth must be >= 0");
  require(orbit_ascending == 0 || orbit_ascending == 1, Errc::invalid_argument, "orbit_ascending must be 0 or 1");
  require(satellite_id == 0 || satellite_id == 1, Errc::invalid_argument, "satellite_id must be 0 or 1");
  require(incidence_angle >= 20.0 && incidence_angle <= 50.0, Errc::invalid_argument,
          "incidence_angle outside [20, 50] degrees");
  for (double p : precip) {
    require(std::isfinite(p) && p >= 0.0, Errc::invalid_argument, "precipitation must be >= 0");
  }
}

const char* to_string(SplitTag tag) noexcept { return tag == SplitTag::train ? "train" : "test"; }

SplitTag parse_split_tag(const std::string& text) {
  if (text == "train") return SplitTag::train;
  if (text == "test") return SplitTag::test;
  throw Error(Errc::corrupt, "unknown split tag '" + text + "'");
}

void SceneSample::validate() const {
  require(dem.channels() == 1, Errc::dimension_mismatch, "dem must have one channel");
  auto check = [&](const Raster& r, const std::string& name) {
    if (!r.same_grid(dem)) {
      throw Error(Errc::dimension_mismatch, name + " is " + std::to_string(r.height()) + "x" +
                                                std::to_string(r.width()) + ", dem is " +
                                                std::to_string(dem.height()) + "x" + std::to_string(dem.width()));
    }
  };
  for (std::size_t i = 0; i < prev_images.size(); ++i) {
    check(prev_images[i].raster(), "prev_images[" + std::to_string(i) + "]");
  }
  check(target.raster(), "target");
}

NormStats NormStats::identity() {
  NormStats s;
  s.stack_std.fill(1.0);
  s.cond_std.fill(1.0);
  s.target_std.fill(1.0);
  return s;
}

void NormStats::validate() const {
  auto positive = [](const auto& arr) {
    for (double v : arr) {
      if (!(v > 0.0) || !std::isfinite(v)) return false;
    }
    return true;
  };
  require(positive(stack_std) && positive(cond_std) && positive(target_std), Errc::invalid_argument,
          "normalization std entries must be > 0");
}

Raster stack_inputs(const SceneSample& sample, const NormStats& stats) {
  sample.validate();
  const Index h = sample.dem.height();
  const Index w = sample.dem.width();
  Raster out(h, w, kStackChannels);
  auto standardize = [&](Index out_channel, Raster::ChannelView src) {
    const double mean = stats.stack_mean[static_cast<std::size_t>(out_channel)];
    const double inv = 1.0 / stats.stack_std[static_cast<std::size_t>(out_channel)];
    out.channel(out_channel) = ((src.cast<double>() - mean) * inv).cast<float>();
  };
  standardize(0, sample.dem.channel(0));
  for (Index i = 0; i < kPreviousImages; ++i) {
    const Raster& img = sample.prev_images[static_cast<std::size_t>(i)].raster();
    standardize(1 + 2 * i, img.channel(kVV));
    standardize(2 + 2 * i, img.channel(kVH));
  }
  return out;
}

Eigen::VectorXd encode_conditions(std::span<const AcquisitionConditions, kPreviousImages> prev,
                                  const AcquisitionConditions& target, const NormStats& stats) {
  Eigen::VectorXd out(kConditionLength);
  auto encode_block = [&](Index block, const AcquisitionConditions& c) {
    c.validate();
    const auto flat = c.flatten();
    for (Index s = 0; s < AcquisitionConditions::kLength; ++s) {
      const auto us = static_cast<std::size_t>(s);
      out[block * AcquisitionConditions::kLength + s] =
          is_binary_slot(s) ? flat[us] : (flat[us] - stats.cond_mean[us]) / stats.cond_std[us];
    }
  };
  for (Index i = 0; i < kPreviousImages; ++i) encode_block(i, prev[static_cast<std::size_t>(i)]);
  encode_block(kPreviousImages, target);
  return out;
}

namespace {

/// Sum / sum-of-squares accumulator in 64-bit.
struct Moments {
  double n = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;

  template <typename Derived>
  void add(const Eigen::ArrayBase<Derived>& values) {
    const auto d = values.template cast<double>();
    n += static_cast<double>(values.size());
    sum += d.sum();
    sum_sq += d.square().sum();
  }
  void add(double v) {
    n += 1.0;
    sum += v;
    sum_sq += v * v;
  }
  double mean() const { return sum / n; }
  double std() const {
    const double m = mean();
    const double var = std::max(0.0, sum_sq / n - m * m);
    return std::max(std::sqrt(var), kStdFloor);
  }
};

}  // namespace

NormStats fit_norm_stats(const SampleSource& source) {
  std::array<Moments, kStackChannels> stack;
  std::array<Moments, AcquisitionConditions::kLength> cond;
  std::array<Moments, 2> target;
  std::size_t used = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source.split(i) != SplitTag::train) continue;
    const SceneSample s = source.load(i);
    s.validate();
    ++used;
    stack[0].add(s.dem.channel(0));
    for (Index k = 0; k < kPreviousImages; ++k) {
      const Raster& img = s.prev_images[static_cast<std::size_t>(k)].raster();
      stack[static_cast<std::size_t>(1 + 2 * k)].add(img.channel(kVV));
      stack[static_cast<std::size_t>(2 + 2 * k)].add(img.channel(kVH));
    }
    auto add_cond = [&](const AcquisitionConditions& c) {
      const auto flat = c.flatten();
      for (std::size_t f = 0; f < flat.size(); ++f) cond[f].add(flat[f]);
    };
    for (const auto& c : s.prev_conditions) add_cond(c);
    add_cond(s.target_conditions);
    target[0].add(s.target.raster().channel(kVV));
    target[1].add(s.target.raster().channel(kVH));
  }
  require(used > 0, Errc::insufficient_data, "fit_norm_stats needs at least one training sample");

  NormStats stats;
  for (std::size_t c = 0; c < stack.size(); ++c) {
    stats.stack_mean[c] = stack[c].mean();
    stats.stack_std[c] = stack[c].std();
  }
  for (std::size_t f = 0; f < cond.size(); ++f) {
    if (is_binary_slot(static_cast<Index>(f))) {
      stats.cond_mean[f] = 0.0;
      stats.cond_std[f] = 1.0;
    } else {
      stats.cond_mean[f] = cond[f].mean();
      stats.cond_std[f] = cond[f].std();
    }
  }
  for (std::size_t b = 0; b < 2; ++b) {
    stats.target_mean[b] = target[b].mean();
    stats.target_std[b] = target[b].std();
  }
  return stats;
}

void write_raster(std::ostream& out, const Raster& raster) {
  require(raster.all_finite(), Errc::non_finite, "refusing to write a raster with NaN or infinity");
  out.write(kRasterMagic, 4);
  put<std::uint32_t>(out, kRasterVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(raster.height()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(raster.width()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(raster.channels()));
  out.write(reinterpret_cast<const char*>(raster.data().data()),
            static_cast<std::streamsize>(raster.size() * static_cast<Index>(sizeof(float))));
  require(static_cast<bool>(out), Errc::io_failure, "raster write failed");
}

Raster read_raster(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw Error(Errc::truncated, "raster header");
  if (std::memcmp(magic, kRasterMagic, 4) != 0) throw Error(Errc::bad_magic, "expected DRAS");
  std::uint32_t version = 0, h = 0, w = 0, c = 0;
  if (!get(in, version)) throw Error(Errc::truncated, "raster header");
  if (version != kRasterVersion) throw Error(Errc::version_mismatch, "DRAS version " + std::to_string(version));
  if (!get(in, h) || !get(in, w) || !get(in, c)) throw Error(Errc::truncated, "raster header");
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w * c;
  if ((h != 0 && w != 0 && count / h / w != c) || count > kMaxRasterElements) {
    throw Error(Errc::dimension_overflow,
                std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c));
  }
  Eigen::ArrayXf data(static_cast<Index>(count));
  const auto bytes = static_cast<std::streamsize>(count * sizeof(float));
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (in.gcount() != bytes) {
    throw Error(Errc::truncated, "declared " + std::to_string(count) + " values, payload has " +
                                     std::to_string(in.gcount() / static_cast<std::streamsize>(sizeof(float))));
  }
  if (!data.isFinite().all()) throw Error(Errc::corrupt, "raster payload contains NaN or infinity");
  return Raster(h, w, c, std::move(data));
}

void write_raster(const std::filesystem::path& path, const Raster& raster) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io_failure, "cannot write " + path.string());
  write_raster(out, raster);
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_failure, "cannot open " + path.string());
  Raster r = read_raster(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::truncated, path.string() + ": payload longer than declared dimensions");
  }
  return r;
}

std::uint8_t pgm_level(double value, double lo, double hi) {
  const double t = std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(255.0 * t + 0.5));
}

void export_pgm(const Raster& raster, Index channel, double lo_db, double hi_db,
                const std::filesystem::path& path) {
  require(channel >= 0 && channel < raster.channels(), Errc::invalid_argument,
          "channel " + std::to_string(channel) + " not in raster with " + std::to_string(raster.channels()));
  require(lo_db < hi_db, Errc::invalid_argument, "export_pgm needs lo_db < hi_db");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io_failure, "cannot write " + path.string());
  out << "P5\n" << raster.width() << ' ' << raster.height() << "\n255\n";
  const auto view = raster.channel(channel);
  std::vector<char> bytes(static_cast<std::size_t>(raster.pixels()));
  for (Index i = 0; i < raster.pixels(); ++i) {
    bytes[static_cast<std::size_t>(i)] = static_cast<char>(pgm_level(view[i], lo_db, hi_db));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), Errc::io_failure, "pgm write failed");
}

}  // namespace diforge
