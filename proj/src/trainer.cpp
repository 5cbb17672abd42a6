#include "diforge/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "diforge/rng.hpp"
#include "diforge/text_io.hpp"

namespace diforge {

namespace {

Raster standardize_target(const Raster& image, const NormStats& stats) {
  Raster out(image.height(), image.width(), kOutputBands);
  for (Index c = 0; c < kOutputBands; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    out.channel(c) =
        ((image.channel(c).cast<double>() - stats.target_mean[uc]) / stats.target_std[uc]).cast<float>();
  }
  return out;
}

std::vector<std::size_t> split_indices(const SampleSource& source, SplitTag tag) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source.split(i) == tag) out.push_back(i);
  }
  return out;
}

Tensor<float> pack_rows(const std::vector<Raster>& rasters, const std::vector<std::size_t>& rows) {
  std::vector<const Raster*> ptrs;
  ptrs.reserve(rows.size());
  for (std::size_t r : rows) ptrs.push_back(&rasters[r]);
  return pack_batch<float>(ptrs);
}

Eigen::MatrixXd cond_rows(const Eigen::MatrixXd& cond, const std::vector<std::size_t>& rows,
                          const std::vector<std::string>& dropped) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), cond.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = cond.row(static_cast<Index>(rows[r]));
  apply_drops(out, dropped);
  return out;
}

double sample_mse(const Eigen::Ref<const Eigen::ArrayXf>& a, const Eigen::Ref<const Eigen::ArrayXf>& b) {
  return (a.cast<double>() - b.cast<double>()).square().mean();
}

}  // namespace

void TrainConfig::validate() const {
  require(batch_size >= 1, Errc::config, "batch_size must be at least 1");
  require(lr >= 0.0 && std::isfinite(lr), Errc::config, "lr must be finite and non-negative");
  require(epochs >= 1, Errc::config, "epochs must be at least 1");
  require(patience >= 1, Errc::config, "patience must be at least 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, Errc::config, "betas must lie in [0, 1)");
  require(eps > 0.0 && weight_decay >= 0.0, Errc::config, "eps must be positive and weight_decay non-negative");
}

PreparedSet prepare(const SampleSource& source, const std::vector<std::size_t>& indices, const NormStats& stats) {
  PreparedSet set;
  set.cond.resize(static_cast<Index>(indices.size()), kConditionLength);
  set.stacks.reserve(indices.size());
  set.targets.reserve(indices.size());
  set.last_previous.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const SceneSample s = source.load(indices[r]);
    set.stacks.push_back(stack_inputs(s, stats));
    set.targets.push_back(standardize_target(s.target.raster(), stats));
    set.last_previous.push_back(standardize_target(s.prev_images.back().raster(), stats));
    set.cond.row(static_cast<Index>(r)) = encode_conditions(s.prev_conditions, s.target_conditions, stats).transpose();
  }
  return set;
}

double evaluate_mse(const Model& model, const PreparedSet& set, Index batch_size) {
  require(set.size() > 0, Errc::insufficient_data, "evaluate_mse: empty sample set");
  double total = 0.0;
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> rows;
    for (std::size_t r = start; r < std::min(set.size(), start + static_cast<std::size_t>(batch_size)); ++r) rows.push_back(r);
    Eigen::MatrixXd cond(static_cast<Index>(rows.size()), kConditionLength);
    for (std::size_t r = 0; r < rows.size(); ++r) cond.row(static_cast<Index>(r)) = set.cond.row(static_cast<Index>(rows[r]));
    const Tensor<float> pred = forward_batch(model, pack_rows(set.stacks, rows), cond);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Index n = set.targets[rows[r]].size();
      total += sample_mse(pred.array().segment(static_cast<Index>(r) * n, n), set.targets[rows[r]].data());
    }
  }
  return total / static_cast<double>(set.size());
}

double evaluate_mse(const Model& model, const SampleSource& source, SplitTag split) {
  return evaluate_mse(model, prepare(source, split_indices(source, split), model.stats));
}

double baseline_mse(const PreparedSet& set) {
  require(set.size() > 0, Errc::insufficient_data, "baseline_mse: empty sample set");
  double total = 0.0;
  for (std::size_t r = 0; r < set.size(); ++r) total += sample_mse(set.last_previous[r].data(), set.targets[r].data());
  return total / static_cast<double>(set.size());
}

double baseline_mse(const SampleSource& source, SplitTag split, const NormStats& stats) {
  return baseline_mse(prepare(source, split_indices(source, split), stats));
}

TrainResult train(Model model, const SampleSource& source, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto train_idx = split_indices(source, SplitTag::train);
  const auto test_idx = split_indices(source, SplitTag::test);
  require(!train_idx.empty(), Errc::insufficient_data, "train: no training samples");

  model.stats = fit_norm_stats(source);
  const PreparedSet train_set = prepare(source, train_idx, model.stats);
  const PreparedSet test_set = prepare(source, test_idx, model.stats);

  TrainResult result;
  result.baseline_mse = test_set.size() ? baseline_mse(test_set) : baseline_mse(train_set);

  AdamWState<float> opt;
  opt.lr = config.lr;
  opt.beta1 = config.beta1;
  opt.beta2 = config.beta2;
  opt.eps = config.eps;
  opt.weight_decay = config.weight_decay;
  const auto names = param_names(model.config);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_rng(config.shuffle_seed, {0x7368756666});

  Model best = model;
  double best_heldout = std::numeric_limits<double>::infinity();
  Index since_best = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
      ad::Tape<float> tape;
      std::vector<ad::Tape<float>::Var> vars;
      vars.reserve(model.params.size());
      for (const auto& p : model.params) vars.push_back(tape.leaf(p, true));
      const auto x = tape.constant(pack_rows(train_set.stacks, rows));
      const auto y = tape.constant(pack_rows(train_set.targets, rows));
      const auto pred = unet_graph(tape, model.config, vars, x, cond_rows(train_set.cond, rows, model.config.dropped_features));
      const auto loss = ad::mse_loss(tape, pred, y);
      tape.backward(loss);
      loss_sum += static_cast<double>(tape.value(loss).array()[0]) * static_cast<double>(rows.size());

      std::vector<Tensor<float>> grads;
      grads.reserve(vars.size());
      for (auto v : vars) grads.push_back(tape.grad(v));
      adamw_step(model.params, grads, opt, names);
    }

    EpochLoss row;
    row.epoch = epoch;
    row.train_mse = loss_sum / static_cast<double>(order.size());
    row.heldout_mse = test_set.size() ? evaluate_mse(model, test_set, config.batch_size) : row.train_mse;
    result.curve.push_back(row);
    if (on_epoch) on_epoch(row);

    model.meta.epochs = epoch;
    model.meta.final_train_mse = row.train_mse;
    if (row.heldout_mse < best_heldout) {
      best_heldout = row.heldout_mse;
      since_best = 0;
      best = model;
      best.meta.best_epoch = epoch;
      best.meta.best_heldout_mse = row.heldout_mse;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  best.meta.epochs = model.meta.epochs;
  best.meta.final_train_mse = model.meta.final_train_mse;
  result.model = std::move(best);
  return result;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<EpochLoss>& curve) {
  std::string text = "epoch,train_mse,heldout_mse\n";
  for (const auto& r : curve) {
    text += std::to_string(r.epoch) + "," + format_number(r.train_mse) + "," + format_number(r.heldout_mse) + "\n";
  }
  write_text_file(path, text);
}

}  // namespace diforge
