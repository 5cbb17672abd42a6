#include <gtest/gtest.h>

#include "diforge/diffimage.hpp"
#include "test_util.hpp"

using namespace diforge;

namespace {

AcquisitionConditions cond(int orbit, double incidence) {
  AcquisitionConditions c;
  c.orbit_ascending = orbit;
  c.incidence_angle = incidence;
  return c;
}

SarImage constant_image(float vv, float vh) {
  Raster r(2, 3, 2);
  for (Index p = 0; p < 6; ++p) {
    r.data()[2 * p] = vv;
    r.data()[2 * p + 1] = vh;
  }
  return SarImage(r);
}

}  // namespace

TEST(DiffImage, SelectionStrategies) {
  // Oldest -> newest.
  const std::array<AcquisitionConditions, 4> prev{cond(1, 36.0), cond(0, 30.5), cond(1, 41.9), cond(0, 36.1)};
  const AcquisitionConditions target = cond(1, 36.2);
  EXPECT_EQ(select_previous(prev, target, 1), 0);  // same orbit, closest angle
  EXPECT_EQ(select_previous(prev, target, 2), 2);  // most recent same orbit
  EXPECT_EQ(select_previous(prev, target, 3), 3);  // I(t-1) regardless
  EXPECT_THROW(select_previous(prev, target, 4), Error);
}

TEST(DiffImage, IncidenceTiesGoToTheMostRecent) {
  const std::array<AcquisitionConditions, 4> prev{cond(1, 30.0), cond(1, 40.0), cond(1, 30.0), cond(0, 35.0)};
  EXPECT_EQ(select_previous(prev, cond(1, 35.0), 1), 2);
}

TEST(DiffImage, NoSameOrbitCandidate) {
  const std::array<AcquisitionConditions, 4> prev{cond(0, 30.0), cond(0, 40.0), cond(0, 30.0), cond(0, 35.0)};
  try {
    select_previous(prev, cond(1, 35.0), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_data);
  }
  EXPECT_EQ(select_previous(prev, cond(1, 35.0), 3), 3);
}

TEST(DiffImage, ScalarAndVectorForms) {
  const SarImage a = constant_image(-10.0f, -17.0f);
  const SarImage b = constant_image(-13.0f, -13.0f);
  const Raster s = di_scalar(a, b);
  const Raster v = di_vector(a, b);
  ASSERT_EQ(s.channels(), 1);
  ASSERT_EQ(v.channels(), 2);
  for (Index p = 0; p < 6; ++p) {
    EXPECT_FLOAT_EQ(s.data()[p], 5.0f);
    EXPECT_FLOAT_EQ(v(p / 3, p % 3, kVV), 3.0f);
    EXPECT_FLOAT_EQ(v(p / 3, p % 3, kVH), -4.0f);
  }
  EXPECT_EQ(di_scalar(a, a).data().abs().maxCoeff(), 0.0f);
  EXPECT_THROW(di_scalar(a, SarImage(Raster(3, 3, 2, -10.0f))), Error);
}

TEST(DiffImage, ConventionalUsesTheSelectedImage) {
  SceneSample s = tiny_sample(12, SplitTag::test);
  for (int strategy = 1; strategy <= 3; ++strategy) {
    const DifferenceImage di = make_di_conventional(s, s.target, strategy, DiForm::vector);
    const Index k = select_previous(s, strategy);
    EXPECT_EQ(di.raster, di_vector(s.target, s.prev_images[static_cast<std::size_t>(k)]));
    EXPECT_EQ(di.method, DiMethod::conventional);
    EXPECT_EQ(di.strategy, strategy);
    EXPECT_EQ(di.sample_id, s.sample_id);
  }
}

TEST(DiffImage, ProposedComparesAgainstThePrediction) {
  const SceneSample s = tiny_sample(13, SplitTag::test);
  const SarImage pred = s.prev_images[0];
  const DifferenceImage di = make_di_proposed(pred, s, s.target, DiForm::scalar);
  EXPECT_EQ(di.raster, di_scalar(s.target, pred));
  EXPECT_EQ(di.method, DiMethod::proposed);
  EXPECT_EQ(di.strategy, 0);
}
