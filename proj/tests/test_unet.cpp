#include <gtest/gtest.h>

#include <fstream>

#include "diforge/grad_check.hpp"
#include "diforge/unet.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace diforge;

namespace {

UNetConfig small_config() {
  UNetConfig c;
  c.input_size = 16;
  c.down = {{4, 4}, {6, 4}, {6, 4}, {5, 2}};
  c.up = {{6, 4}, {5, 4}, {4, 4}, {2, 4}};
  c.seed = 7;
  return c;
}

Tensor<float> random_input(std::uint64_t seed, Index batch, Index size) {
  Rng rng = make_rng(seed);
  return oracle::random_tensor(rng, Shape{batch, size, size, kInputChannels}).cast<float>();
}

Eigen::MatrixXd random_cond(std::uint64_t seed, Index batch) {
  Rng rng = make_rng(seed, {1});
  Eigen::MatrixXd c(batch, kConditionLength);
  for (Index i = 0; i < c.size(); ++i) c(i) = uniform01(rng) * 2 - 1;
  return c;
}

}  // namespace

TEST(UNet, DefaultParameterCountMatchesLayerFormula) {
  // Encoder: k*k*Cin*Cout + Cout per block, chaining from 9 input channels.
  const std::vector<std::array<Index, 3>> enc{{4, 9, 16}, {4, 16, 32}, {4, 32, 64}, {4, 64, 64}, {4, 64, 64}, {2, 64, 64}};
  // Decoder inputs: bottleneck plus 45 conditions, then previous output plus skip.
  const std::vector<std::array<Index, 3>> dec{{4, 64 + 45, 64}, {4, 64 + 64, 64}, {4, 64 + 64, 64},
                                              {4, 64 + 64, 32}, {4, 32 + 32, 16}, {4, 16 + 16, 2}};
  Index want = 0;
  for (const auto& [k, cin, cout] : enc) want += k * k * cin * cout + cout;
  for (const auto& [k, cin, cout] : dec) want += k * k * cin * cout + cout;
  EXPECT_EQ(param_count(UNetConfig{}), want);
  EXPECT_EQ(want, 647970);
  EXPECT_EQ(param_names(UNetConfig{}).front(), "down0.w");
  EXPECT_EQ(param_names(UNetConfig{}).back(), "up5.b");
}

TEST(UNet, ConfigValidation) {
  UNetConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.input_size = 24;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.down.pop_back();
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.up.back().filters = 3;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.down[0].kernel = 3;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.dropped_features = {"humidity"};
  EXPECT_THROW(c.validate(), Error);

  c = small_config();
  c.dropped_features = {"weather", "orbit"};
  EXPECT_EQ(UNetConfig::from_keys(c.to_keys()), c);
}

TEST(UNet, DropSlotsCoverEveryBlock) {
  EXPECT_EQ(feature_slots("orbit"), (std::vector<Index>{2, 11, 20, 29, 38}));
  EXPECT_EQ(feature_slots("weather").size(), 30u);
  Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(2, kConditionLength);
  apply_drops(rows, {"precip"});
  EXPECT_DOUBLE_EQ(rows.sum(), 2.0 * (45 - 20));
  EXPECT_EQ(rows(1, 9 + 5), 0.0);
  EXPECT_EQ(rows(1, 9 + 4), 1.0);
}

TEST(UNet, InitializationIsSeededAndBiasesStartAtZero) {
  const Model a = build_unet(small_config());
  const Model b = build_unet(small_config());
  UNetConfig other = small_config();
  other.seed = 8;
  const Model c = build_unet(other);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_TRUE((a.params[i].array() == b.params[i].array()).all());
    if (i % 2 == 1) {
      EXPECT_TRUE((a.params[i].array() == 0.0f).all());
    }
  }
  EXPECT_FALSE((a.params[0].array() == c.params[0].array()).all());

  // Weight std near 0.02 on the largest tensor of the default network.
  const Model d = build_unet(UNetConfig{});
  const auto& w = d.params[8].array();
  const double mean = w.cast<double>().mean();
  const double sd = std::sqrt((w.cast<double>() - mean).square().mean());
  EXPECT_NEAR(sd, kInitStd, 0.001);
}

TEST(UNet, ZeroFinalLayerPredictsTargetMeans) {
  Model m = build_unet(small_config());
  m.params[m.params.size() - 2].array().setZero();
  m.params.back().array().setZero();
  m.stats.target_mean = {-11.0, -18.5};
  m.stats.target_std = {3.0, 2.0};
  const Tensor<float> in = random_input(1, 1, 16);
  const Raster stack(16, 16, kInputChannels, Eigen::ArrayXf(in.array()));
  const SarImage out = forward(m, stack, random_cond(1, 1).row(0).transpose());
  for (Index p = 0; p < out.raster().pixels(); ++p) {
    EXPECT_FLOAT_EQ(out.raster().data()[2 * p], -11.0f);
    EXPECT_FLOAT_EQ(out.raster().data()[2 * p + 1], -18.5f);
  }
}

TEST(UNet, OutputShapeAndConditionSensitivity) {
  const Model m = build_unet(small_config());
  const Tensor<float> in = random_input(2, 3, 16);
  Eigen::MatrixXd cond = random_cond(2, 3);
  const Tensor<float> out = forward_batch(m, in, cond);
  EXPECT_EQ(out.shape(), (Shape{3, 16, 16, 2}));
  cond(1, 40) += 5.0;
  const Tensor<float> out2 = forward_batch(m, in, cond);
  const Index n = 16 * 16 * 2;
  EXPECT_TRUE((out.array().segment(0, n) == out2.array().segment(0, n)).all());
  EXPECT_FALSE((out.array().segment(n, n) == out2.array().segment(n, n)).all());

  EXPECT_THROW(forward_batch(m, random_input(2, 1, 32), random_cond(2, 1)), Error);
  EXPECT_THROW(forward_batch(m, in, random_cond(2, 2)), Error);
}

TEST(UNet, DroppedFeaturesDoNotReachTheNetwork) {
  UNetConfig c = small_config();
  c.dropped_features = {"orbit"};
  const Model m = build_unet(c);
  const Tensor<float> in = random_input(3, 1, 16);
  Eigen::MatrixXd cond = random_cond(3, 1);
  const Tensor<float> a = forward_batch(m, in, cond);
  for (Index s : feature_slots("orbit")) cond(0, s) = 1.0 - cond(0, s);
  const Tensor<float> b = forward_batch(m, in, cond);
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(UNet, SkipHookRemovesOnlyTheChosenConnection) {
  const Model m = build_unet(small_config());
  const Tensor<float> in = random_input(4, 1, 16);
  const Eigen::MatrixXd cond = random_cond(4, 1);
  const Tensor<float> base = forward_batch(m, in, cond);
  for (std::size_t j = 1; j < 4; ++j) {
    SkipMask mask(4, false);
    mask[j] = true;
    const Tensor<float> cut = forward_batch(m, in, cond, &mask);
    EXPECT_FALSE((cut.array() == base.array()).all()) << "skip " << j;
  }
  SkipMask none(4, false);
  EXPECT_TRUE((forward_batch(m, in, cond, &none).array() == base.array()).all());

  SkipMask all(4, true);
  EXPECT_TRUE(forward_batch(m, in, cond, &all).array().isFinite().all());
}

TEST(UNet, FullNetworkGradientMatchesFiniteDifferences) {
  // Whole network in double precision; five coordinates per check, drawn
  // from different parameter tensors.
  const UNetConfig c = small_config();
  const Model m = build_unet(c);
  std::vector<Tensor<double>> inputs;
  for (const auto& p : m.params) inputs.push_back(p.cast<double>());
  // Scale weights up so activations are not vanishingly small.
  for (std::size_t i = 0; i < inputs.size(); i += 2) inputs[i].array() *= 10.0;
  Rng brng = make_rng(5);
  for (std::size_t i = 1; i < inputs.size(); i += 2) inputs[i] = oracle::random_tensor(brng, inputs[i].shape(), 0.1);
  const Tensor<double> x = random_input(5, 2, 16).cast<double>();
  const Eigen::MatrixXd cond = random_cond(5, 2);
  Rng trng = make_rng(6);
  const Tensor<double> target = oracle::random_tensor(trng, Shape{2, 16, 16, 2});

  const ad::ScalarFn fn = [&](ad::Tape<double>& t, const std::vector<ad::Tape<double>::Var>& v) {
    const auto pred = unet_graph(t, c, v, t.constant(x), cond);
    return ad::mse_loss(t, pred, t.constant(target));
  };
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng pick = make_rng(seed, {0x9c});
    std::vector<std::pair<std::size_t, Index>> coords;
    for (int k = 0; k < 5; ++k) {
      const std::size_t p = static_cast<std::size_t>(pick() % inputs.size());
      coords.emplace_back(p, static_cast<Index>(pick() % static_cast<std::uint64_t>(inputs[p].size())));
    }
    const auto r = ad::grad_check(fn, inputs, 1e-6, [&](std::size_t i, Index j) {
      return std::find(coords.begin(), coords.end(), std::make_pair(i, j)) != coords.end();
    });
    EXPECT_EQ(r.checked, 5u);
    EXPECT_LT(r.max_rel_error, 1e-3) << "seed " << seed << " worst param " << r.worst_input;
  }
}

TEST(UNet, CheckpointRoundTrip) {
  TempDir dir;
  Model m = build_unet(small_config());
  m.stats.target_mean = {-10.25, -17.5};
  m.meta.epochs = 3;
  m.meta.best_epoch = 2;
  m.meta.final_train_mse = 0.5;
  m.meta.best_heldout_mse = 0.625;
  save_checkpoint(m, dir.path() / "m.dnet");
  const Model back = load_checkpoint(dir.path() / "m.dnet", small_config());
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.stats, m.stats);
  EXPECT_EQ(back.meta.best_epoch, 2);
  EXPECT_EQ(back.meta.best_heldout_mse, 0.625);
  ASSERT_EQ(back.params.size(), m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    EXPECT_EQ(back.params[i].shape(), m.params[i].shape());
    EXPECT_TRUE((back.params[i].array() == m.params[i].array()).all());
  }

  // An untrained model (NaN metadata) round-trips too.
  save_checkpoint(build_unet(small_config()), dir.path() / "fresh.dnet");
  EXPECT_TRUE(std::isnan(load_checkpoint(dir.path() / "fresh.dnet").meta.best_heldout_mse));
}

TEST(UNet, CheckpointErrorsAreClassified) {
  TempDir dir;
  const Model m = build_unet(small_config());
  const auto good = dir.path() / "good.dnet";
  save_checkpoint(m, good);
  const std::string bytes = read_file(good);

  auto code_of = [&](const std::string& content, const UNetConfig* expected = nullptr) {
    const auto p = dir.path() / "bad.dnet";
    std::ofstream(p, std::ios::binary) << content;
    try {
      if (expected) load_checkpoint(p, *expected);
      else load_checkpoint(p);
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "checkpoint accepted";
    return Errc::invalid_argument;
  };

  EXPECT_EQ(code_of(bytes.substr(0, bytes.size() - 7)), Errc::corrupt);
  EXPECT_EQ(code_of(bytes.substr(0, 30)), Errc::corrupt);
  EXPECT_EQ(code_of(bytes + "x"), Errc::corrupt);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(code_of(magic), Errc::bad_magic);
  std::string version = bytes;
  version[4] = 9;
  EXPECT_EQ(code_of(version), Errc::version_mismatch);

  UNetConfig wider = small_config();
  wider.down[1].filters = 7;
  EXPECT_EQ(code_of(bytes, &wider), Errc::shape_mismatch);

  Model wrong = m;
  wrong.params[2] = Tensor<float>(Shape{4, 4, 4, 5});
  save_checkpoint(wrong, dir.path() / "wrong.dnet");
  EXPECT_EQ(code_of(read_file(dir.path() / "wrong.dnet")), Errc::shape_mismatch);
  Model fewer = m;
  fewer.params.pop_back();
  save_checkpoint(fewer, dir.path() / "fewer.dnet");
  EXPECT_EQ(code_of(read_file(dir.path() / "fewer.dnet")), Errc::shape_mismatch);
}
