#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "diforge/unet.hpp"

namespace diforge {

template <typename Scalar>
struct AdamWState {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::int64_t t = 0;
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
};

/// One decoupled-decay Adam update. Moments are created on the first call.
/// `names` is only used to report which parameter had a non-finite gradient.
template <typename Scalar>
void adamw_step(std::vector<Tensor<Scalar>>& params, const std::vector<Tensor<Scalar>>& grads,
                AdamWState<Scalar>& state, const std::vector<std::string>& names = {}) {
  require(params.size() == grads.size(), Errc::shape_mismatch, "adamw_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  require(state.m.size() == params.size(), Errc::shape_mismatch, "adamw_step: optimizer state has the wrong size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].shape() == grads[i].shape() && state.m[i].shape() == params[i].shape(), Errc::shape_mismatch,
            "adamw_step: shape mismatch at parameter " + std::to_string(i));
    if (!grads[i].array().isFinite().all()) {
      throw Error(Errc::non_finite,
                  "gradient of " + (i < names.size() ? names[i] : "parameter " + std::to_string(i)) +
                      " contains NaN or infinity");
    }
  }

  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto lr = static_cast<Scalar>(state.lr);
  const auto eps = static_cast<Scalar>(state.eps);
  const auto wd = static_cast<Scalar>(state.weight_decay);
  const auto inv_c1 = static_cast<Scalar>(1.0 / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i].array();
    auto& v = state.v[i].array();
    const auto& g = grads[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    auto& theta = params[i].array();
    theta -= lr * ((m * inv_c1) / ((v * inv_c2).sqrt() + eps) + wd * theta);
  }
}

struct TrainConfig {
  Index epochs = 60;
  Index batch_size = 16;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::uint64_t shuffle_seed = 1;
  Index patience = 8;

  void validate() const;
};

struct EpochLoss {
  Index epoch = 0;
  double train_mse = 0.0;
  double heldout_mse = 0.0;
};

/// Standardized network inputs and targets for a list of samples, held in
/// memory so epochs do not re-read rasters.
struct PreparedSet {
  std::vector<Raster> stacks;
  std::vector<Raster> targets;  // standardized with the target statistics
  std::vector<Raster> last_previous;  // I(t-1), standardized the same way
  Eigen::MatrixXd cond;        // one encoded row per sample
  std::size_t size() const { return stacks.size(); }
};

PreparedSet prepare(const SampleSource& source, const std::vector<std::size_t>& indices, const NormStats& stats);

/// Mean per-sample MSE in standardized units, accumulated in sample order.
double evaluate_mse(const Model& model, const PreparedSet& set, Index batch_size = 16);
double evaluate_mse(const Model& model, const SampleSource& source, SplitTag split);

/// MSE of predicting I(t) = I(t-1), standardized with the target statistics.
double baseline_mse(const PreparedSet& set);
double baseline_mse(const SampleSource& source, SplitTag split, const NormStats& stats);

struct TrainResult {
  Model model;  // parameters from the epoch with the lowest held-out MSE
  std::vector<EpochLoss> curve;
  double baseline_mse = 0.0;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Fits normalization on the train split, then runs seeded minibatch AdamW
/// with early stopping on the test split.
TrainResult train(Model model, const SampleSource& source, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// `epoch,train_mse,heldout_mse`.
void write_loss_curve(const std::filesystem::path& path, const std::vector<EpochLoss>& curve);

}  // namespace diforge
