#pragma once

// Conditional U-Net that maps (DEM, four previous images, conditions) to the
// image expected under the target conditions.

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "diforge/autodiff.hpp"
#include "diforge/raster.hpp"
#include "diforge/text_io.hpp"

namespace diforge {

struct BlockSpec {
  Index filters = 0;
  Index kernel = 4;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct UNetConfig {
  Index input_size = 64;
  std::vector<BlockSpec> down{{16, 4}, {32, 4}, {64, 4}, {64, 4}, {64, 4}, {64, 2}};
  std::vector<BlockSpec> up{{64, 4}, {64, 4}, {64, 4}, {32, 4}, {16, 4}, {2, 4}};
  std::uint64_t seed = 1;
  /// Condition features forced to zero in every encoded condition vector.
  std::vector<std::string> dropped_features;

  /// Throws Errc::config unless the block lists fit `input_size`.
  void validate() const;
  KeyValues to_keys() const;
  static UNetConfig from_keys(const KeyValues& kv);

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

inline constexpr Index kInputChannels = kStackChannels;
inline constexpr Index kOutputBands = 2;
inline constexpr float kEncoderSlope = 0.2f;
inline constexpr double kInitStd = 0.02;

/// Names accepted by --drop-feature; `weather` drops temperature, snow and
/// all precipitation slots together.
const std::vector<std::string>& droppable_features();
/// Positions in the 45-long condition vector covered by `feature`.
std::vector<Index> feature_slots(const std::string& feature);
/// Zeroes the slots of every dropped feature.
void apply_drops(Eigen::Ref<Eigen::MatrixXd> cond_rows, const std::vector<std::string>& dropped);

/// Build-order parameter shapes: (w, b) for each down block, then each up
/// block. Down weights are [k,k,Cin,Cout], up weights [k,k,Cout,Cin].
std::vector<Shape> param_shapes(const UNetConfig& config);
Index param_count(const UNetConfig& config);
/// "down0.w", "down0.b", ..., "up5.b".
std::vector<std::string> param_names(const UNetConfig& config);

struct TrainingMeta {
  Index epochs = 0;
  Index best_epoch = 0;
  double final_train_mse = std::numeric_limits<double>::quiet_NaN();
  double best_heldout_mse = std::numeric_limits<double>::quiet_NaN();
};

struct Model {
  UNetConfig config;
  NormStats stats = NormStats::identity();
  std::vector<Tensor<float>> params;
  TrainingMeta meta;
};

/// Weights ~ N(0, 0.02^2), biases 0, deterministic in config.seed.
Model build_unet(const UNetConfig& config);

/// Test hook: `disabled_skips[j]` replaces the skip feeding up block j with
/// zeros. Block 0 takes the bottleneck and has no skip.
using SkipMask = std::vector<bool>;

/// Records the network on `tape`. `input` is [B,N,N,9], `cond` is B x 45
/// (drops already applied). Returns the [B,N,N,2] standardized prediction.
template <typename Scalar>
typename ad::Tape<Scalar>::Var unet_graph(ad::Tape<Scalar>& tape, const UNetConfig& config,
                                          const std::vector<typename ad::Tape<Scalar>::Var>& params,
                                          typename ad::Tape<Scalar>::Var input, const Eigen::MatrixXd& cond,
                                          const SkipMask* disabled_skips = nullptr) {
  using Var = typename ad::Tape<Scalar>::Var;
  const std::size_t nd = config.down.size();
  require(params.size() == 2 * (nd + config.up.size()), Errc::shape_mismatch, "unet_graph: parameter count");

  std::vector<Var> skips;
  Var h = input;
  for (std::size_t i = 0; i < nd; ++i) {
    h = ad::leaky_relu(tape, ad::conv2d_down(tape, h, params[2 * i], params[2 * i + 1]), Scalar(kEncoderSlope));
    skips.push_back(h);
  }
  h = ad::broadcast_latent(tape, h, cond);
  for (std::size_t j = 0; j < config.up.size(); ++j) {
    if (j > 0) {
      Var skip = skips[nd - 1 - j];
      if (disabled_skips && j < disabled_skips->size() && (*disabled_skips)[j])
        skip = tape.constant(Tensor<Scalar>(tape.value(skip).shape()));
      h = ad::concat_channels(tape, h, skip);
    }
    const std::size_t p = 2 * (nd + j);
    h = ad::tconv2d_up(tape, h, params[p], params[p + 1]);
    if (j + 1 < config.up.size()) h = ad::relu(tape, h);
  }
  return h;
}

/// Packs standardized stacks into a [B,N,N,C] tensor.
template <typename Scalar>
Tensor<Scalar> pack_batch(const std::vector<const Raster*>& rasters) {
  require(!rasters.empty(), Errc::invalid_argument, "pack_batch: empty batch");
  const Raster& first = *rasters.front();
  Tensor<Scalar> out(Shape{static_cast<Index>(rasters.size()), first.height(), first.width(), first.channels()});
  const Index n = first.size();
  for (std::size_t b = 0; b < rasters.size(); ++b) {
    require(rasters[b]->height() == first.height() && rasters[b]->width() == first.width() &&
                rasters[b]->channels() == first.channels(),
            Errc::shape_mismatch, "pack_batch: rasters differ in shape");
    out.array().segment(static_cast<Index>(b) * n, n) = rasters[b]->data().template cast<Scalar>();
  }
  return out;
}

/// Standardized prediction for a batch; rows of `cond` are raw encoded
/// condition vectors (drops are applied here).
Tensor<float> forward_batch(const Model& model, const Tensor<float>& input, Eigen::MatrixXd cond,
                            const SkipMask* disabled_skips = nullptr);

/// Predicted image in dB for one standardized 9-channel stack.
SarImage forward(const Model& model, const Raster& input_stack, const Eigen::VectorXd& cond_vec,
                 const SkipMask* disabled_skips = nullptr);

/// Standardizes `sample` with the model's statistics and predicts its target.
SarImage predict(const Model& model, const SceneSample& sample);

/// Maps a standardized [N,N,2] prediction back to dB.
Raster destandardize(const Tensor<float>& pred, Index batch_index, const NormStats& stats);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Throws Errc::version_mismatch, Errc::corrupt (truncated or malformed) or
/// Errc::shape_mismatch (parameters inconsistent with the embedded config).
Model load_checkpoint(const std::filesystem::path& path);
/// Additionally rejects checkpoints whose parameter shapes differ from `expected`.
Model load_checkpoint(const std::filesystem::path& path, const UNetConfig& expected);

}  // namespace diforge
