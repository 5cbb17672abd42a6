#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "diforge/raster.hpp"
#include "diforge/rng.hpp"
#include "test_util.hpp"

using namespace diforge;

namespace {

Raster random_raster(std::uint64_t seed, Index h, Index w, Index c) {
  Rng rng = make_rng(seed);
  Raster r(h, w, c);
  for (Index i = 0; i < r.size(); ++i) r.data()[i] = static_cast<float>(uniform01(rng) * 40.0 - 30.0);
  return r;
}

std::string header(const char magic[4], std::uint32_t version, std::uint32_t h, std::uint32_t w, std::uint32_t c) {
  std::string s(magic, 4);
  for (std::uint32_t v : {version, h, w, c}) s.append(reinterpret_cast<const char*>(&v), 4);
  return s;
}

Errc read_error(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    read_raster(in);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "read_raster accepted malformed input";
  return Errc::invalid_argument;
}

}  // namespace

TEST(Raster, LayoutIsRowMajorWithChannelsInnermost) {
  Raster r(2, 3, 2);
  r(1, 2, 1) = 5.0f;
  EXPECT_EQ(r.data()[(1 * 3 + 2) * 2 + 1], 5.0f);
  EXPECT_EQ(r.channel(1)[5], 5.0f);
}

TEST(Raster, RejectsNonFiniteValues) {
  Eigen::ArrayXf d = Eigen::ArrayXf::Zero(4);
  d[2] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(Raster(2, 2, 1, d), Error);
  EXPECT_THROW(Raster(2, 2, 1, Eigen::ArrayXf::Zero(3)), Error);
}

TEST(Raster, DrasRoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Raster r = random_raster(seed, 3 + static_cast<Index>(seed % 5), 7, 1 + static_cast<Index>(seed % 3));
    std::stringstream buf;
    write_raster(buf, r);
    EXPECT_EQ(read_raster(buf), r);
  }
}

TEST(Raster, DrasHeaderLayout) {
  std::stringstream buf;
  write_raster(buf, Raster(2, 3, 4, 1.5f));
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 20u + 2 * 3 * 4 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "DRAS");
  std::uint32_t fields[4];
  std::memcpy(fields, bytes.data() + 4, 16);
  EXPECT_EQ(fields[0], 1u);
  EXPECT_EQ(fields[1], 2u);
  EXPECT_EQ(fields[2], 3u);
  EXPECT_EQ(fields[3], 4u);
}

TEST(Raster, DrasErrorsAreDistinct) {
  EXPECT_EQ(read_error(header("XRAS", 1, 1, 1, 1) + std::string(4, '\0')), Errc::bad_magic);
  EXPECT_EQ(read_error(header("DRAS", 2, 1, 1, 1) + std::string(4, '\0')), Errc::version_mismatch);
  EXPECT_EQ(read_error(header("DRAS", 1, 2, 2, 1) + std::string(12, '\0')), Errc::truncated);
  EXPECT_EQ(read_error("DRA"), Errc::truncated);
  EXPECT_EQ(read_error(header("DRAS", 1, 65536, 65536, 2)), Errc::dimension_overflow);
}

TEST(Raster, FileReaderRejectsTrailingBytes) {
  TempDir dir;
  const auto p = dir.path() / "r.dras";
  write_raster(p, Raster(2, 2, 1, 1.0f));
  EXPECT_EQ(read_raster(p), Raster(2, 2, 1, 1.0f));
  std::ofstream(p, std::ios::binary | std::ios::app) << "xx";
  try {
    read_raster(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncated);
  }
}

TEST(Raster, SarImageRange) {
  EXPECT_THROW(SarImage(Raster(2, 2, 1, -10.0f)), Error);
  EXPECT_THROW(SarImage(Raster(2, 2, 2, 25.0f)), Error);
  const SarImage s = SarImage::clamped(Raster(2, 2, 2, -80.0f));
  EXPECT_EQ(s(0, 0, 0), kMinDb);
}

TEST(Raster, PgmLevels) {
  EXPECT_EQ(pgm_level(-25.0, -25.0, 5.0), 0);
  EXPECT_EQ(pgm_level(5.0, -25.0, 5.0), 255);
  EXPECT_EQ(pgm_level(-10.0, -25.0, 5.0), 128);  // floor(127.5 + 0.5)
  EXPECT_EQ(pgm_level(-40.0, -25.0, 5.0), 0);
  EXPECT_EQ(pgm_level(40.0, -25.0, 5.0), 255);

  TempDir dir;
  Raster r(1, 2, 2);
  r(0, 1, 1) = 5.0f;
  export_pgm(r, 1, -25.0, 5.0, dir.path() / "x.pgm");
  const std::string bytes = read_file(dir.path() / "x.pgm");
  EXPECT_EQ(bytes, std::string("P5\n2 1\n255\n") + static_cast<char>(pgm_level(0.0, -25.0, 5.0)) + static_cast<char>(255));
}

TEST(Conditions, FlattenOrderAndValidation) {
  AcquisitionConditions c;
  c.mean_temp = -3;
  c.snow_depth = 12;
  c.orbit_ascending = 0;
  c.incidence_angle = 36.2;
  c.satellite_id = 1;
  c.precip = {1, 2, 3, 4};
  const auto f = c.flatten();
  const std::array<double, 9> want{-3, 12, 0, 36.2, 1, 1, 2, 3, 4};
  EXPECT_EQ(f, want);
  EXPECT_EQ(AcquisitionConditions::unflatten(f), c);

  AcquisitionConditions bad = c;
  bad.orbit_ascending = 2;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.precip[2] = -1;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.snow_depth = -0.5;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Conditions, EncodingStandardizesContinuousSlotsOnly) {
  NormStats stats = NormStats::identity();
  stats.cond_mean[slot::kMeanTemp] = 2.0;
  stats.cond_std[slot::kMeanTemp] = 4.0;
  stats.cond_mean[slot::kOrbit] = 100.0;  // ignored for binary slots
  std::array<AcquisitionConditions, 4> prev{};
  AcquisitionConditions target;
  target.mean_temp = 10.0;
  target.orbit_ascending = 1;
  const Eigen::VectorXd v = encode_conditions(prev, target, stats);
  ASSERT_EQ(v.size(), 45);
  EXPECT_DOUBLE_EQ(v[36 + slot::kMeanTemp], 2.0);
  EXPECT_DOUBLE_EQ(v[36 + slot::kOrbit], 1.0);
  EXPECT_DOUBLE_EQ(v[slot::kMeanTemp], -0.5);
}

TEST(NormStats, FitReadsTrainingSamplesOnly) {
  std::vector<SceneSample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back(tiny_sample(static_cast<std::uint64_t>(i), i < 4 ? SplitTag::train : SplitTag::test));
  CountingSource source(samples);
  const NormStats stats = fit_norm_stats(source);
  EXPECT_EQ(source.loads_of(SplitTag::test), 0);
  EXPECT_EQ(source.loads_of(SplitTag::train), 4);

  // Oracle: direct mean and population std of the DEM over the train samples.
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (float v : samples[static_cast<std::size_t>(i)].dem.data()) {
      sum += v;
      sq += static_cast<double>(v) * v;
      n += 1.0;
    }
  }
  const double mean = sum / n;
  EXPECT_NEAR(stats.stack_mean[0], mean, 1e-9);
  EXPECT_NEAR(stats.stack_std[0], std::sqrt(sq / n - mean * mean), 1e-6);
}

TEST(NormStats, StackedInputsHaveUnitScaleOnFitSet) {
  std::vector<SceneSample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(tiny_sample(static_cast<std::uint64_t>(10 + i), SplitTag::train));
  VectorSource source(samples);
  const NormStats stats = fit_norm_stats(source);
  for (Index ch = 0; ch < kStackChannels; ++ch) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto& s : samples) {
      const Raster st = stack_inputs(s, stats);
      for (float v : Eigen::ArrayXf(st.channel(ch))) {
        sum += v;
        sq += static_cast<double>(v) * v;
        n += 1.0;
      }
    }
    EXPECT_NEAR(sum / n, 0.0, 1e-4) << "channel " << ch;
    EXPECT_NEAR(sq / n, 1.0, 1e-3) << "channel " << ch;
  }
}

TEST(SceneSample, ValidateNamesTheOffendingRaster) {
  SceneSample s = tiny_sample(3, SplitTag::train);
  s.prev_images[2] = SarImage(Raster(8, 16, 2, -10.0f));
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("prev_images[2]"), std::string::npos) << e.what();
  }
}
