#pragma once

#include <span>
#include <string>

#include "diforge/raster.hpp"
#include "diforge/unet.hpp"

namespace diforge {

/// Which previous image the conventional method compares against:
/// 1 = same orbit, closest incidence (ties to the most recent);
/// 2 = most recent with the same orbit; 3 = I(t-1).
Index select_previous(std::span<const AcquisitionConditions, kPreviousImages> previous,
                      const AcquisitionConditions& target, int strategy);
Index select_previous(const SceneSample& sample, int strategy);

/// Per-pixel Euclidean length of the band difference; one channel.
Raster di_scalar(const SarImage& a, const SarImage& b);
/// Per-pixel, per-band a - b; two channels.
Raster di_vector(const SarImage& a, const SarImage& b);

enum class DiForm { scalar, vector };
enum class DiMethod { proposed, conventional };

struct DifferenceImage {
  Raster raster;
  DiMethod method = DiMethod::conventional;
  int strategy = 0;  // 0 for the proposed method
  std::string sample_id;
};

DifferenceImage make_di(const SarImage& a, const SarImage& b, DiForm form);

/// `target` is the (possibly changed) observed image; the reference is the
/// network prediction under the sample's target conditions.
DifferenceImage make_di_proposed(const Model& model, const SceneSample& sample, const SarImage& target, DiForm form);
/// Same, with an already computed prediction.
DifferenceImage make_di_proposed(const SarImage& predicted, const SceneSample& sample, const SarImage& target,
                                 DiForm form);
DifferenceImage make_di_conventional(const SceneSample& sample, const SarImage& target, int strategy, DiForm form);

}  // namespace diforge
