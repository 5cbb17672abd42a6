#include "diforge/diffimage.hpp"

#include <cmath>
#include <limits>

namespace diforge {

namespace {

void check_pair(const SarImage& a, const SarImage& b) {
  require(a.raster().same_grid(b.raster()), Errc::dimension_mismatch,
          "difference operands differ in size: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
              " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
}

}  // namespace

Index select_previous(std::span<const AcquisitionConditions, kPreviousImages> previous,
                      const AcquisitionConditions& target, int strategy) {
  require(strategy >= 1 && strategy <= 3, Errc::invalid_argument,
          "selection strategy must be 1, 2 or 3, got " + std::to_string(strategy));
  if (strategy == 3) return kPreviousImages - 1;
  Index best = -1;
  double best_gap = std::numeric_limits<double>::infinity();
  // Newest first, so a strict comparison keeps the most recent on ties.
  for (Index i = kPreviousImages - 1; i >= 0; --i) {
    const auto& c = previous[static_cast<std::size_t>(i)];
    if (c.orbit_ascending != target.orbit_ascending) continue;
    if (strategy == 2) return i;
    const double gap = std::abs(c.incidence_angle - target.incidence_angle);
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  require(best >= 0, Errc::insufficient_data, "no previous image shares the target orbit direction");
  return best;
}

Index select_previous(const SceneSample& sample, int strategy) {
  return select_previous(sample.prev_conditions, sample.target_conditions, strategy);
}

Raster di_scalar(const SarImage& a, const SarImage& b) {
  check_pair(a, b);
  Raster out(a.height(), a.width(), 1);
  const Eigen::ArrayXf d = a.raster().data() - b.raster().data();
  for (Index p = 0; p < out.pixels(); ++p) {
    out.data()[p] = std::sqrt(d[2 * p] * d[2 * p] + d[2 * p + 1] * d[2 * p + 1]);
  }
  return out;
}

Raster di_vector(const SarImage& a, const SarImage& b) {
  check_pair(a, b);
  return Raster(a.height(), a.width(), 2, a.raster().data() - b.raster().data());
}

DifferenceImage make_di(const SarImage& a, const SarImage& b, DiForm form) {
  DifferenceImage di;
  di.raster = form == DiForm::scalar ? di_scalar(a, b) : di_vector(a, b);
  return di;
}

DifferenceImage make_di_proposed(const SarImage& predicted, const SceneSample& sample, const SarImage& target,
                                 DiForm form) {
  DifferenceImage di = make_di(target, predicted, form);
  di.method = DiMethod::proposed;
  di.sample_id = sample.sample_id;
  return di;
}

DifferenceImage make_di_proposed(const Model& model, const SceneSample& sample, const SarImage& target, DiForm form) {
  return make_di_proposed(predict(model, sample), sample, target, form);
}

DifferenceImage make_di_conventional(const SceneSample& sample, const SarImage& target, int strategy, DiForm form) {
  const Index i = select_previous(sample, strategy);
  DifferenceImage di = make_di(target, sample.prev_images[static_cast<std::size_t>(i)], form);
  di.method = DiMethod::conventional;
  di.strategy = strategy;
  di.sample_id = sample.sample_id;
  return di;
}

}  // namespace diforge
