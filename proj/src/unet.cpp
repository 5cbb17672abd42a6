#include "diforge/unet.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diforge/rng.hpp"

namespace diforge {

namespace {

constexpr char kCheckpointMagic[4] = {'D', 'N', 'E', 'T'};

std::string blocks_to_text(const std::vector<BlockSpec>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(blocks[i].filters) + "x" + std::to_string(blocks[i].kernel);
  }
  return out;
}

std::vector<BlockSpec> blocks_from_text(const std::string& text, const std::string& key) {
  std::vector<BlockSpec> out;
  for (const std::string& item : split(text, ',')) {
    const auto parts = split(trim(item), 'x');
    require(parts.size() == 2, Errc::config, key + ": expected <filters>x<kernel>, got '" + item + "'");
    out.push_back({parse_int(parts[0], key), parse_int(parts[1], key)});
  }
  return out;
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (static_cast<std::size_t>(in.gcount()) != sizeof(T)) throw Error(Errc::corrupt, std::string("checkpoint ends inside ") + what);
  return value;
}

}  // namespace

void UNetConfig::validate() const {
  require(input_size >= 2 && (input_size & (input_size - 1)) == 0, Errc::config,
          "input_size must be a power of two, got " + std::to_string(input_size));
  Index levels = 0;
  for (Index s = input_size; s > 1; s /= 2) ++levels;
  require(static_cast<Index>(down.size()) == levels, Errc::config,
          "need " + std::to_string(levels) + " down blocks to reach 1x1 from " + std::to_string(input_size) + ", got " +
              std::to_string(down.size()));
  require(up.size() == down.size(), Errc::config, "up and down block counts differ");
  require(up.back().filters == kOutputBands, Errc::config, "last up block must have 2 filters");
  for (const auto& b : down) {
    require(b.filters > 0 && (b.kernel == 2 || b.kernel == 4), Errc::config, "down blocks need filters > 0 and kernel 2 or 4");
  }
  for (const auto& b : up) require(b.filters > 0 && b.kernel == 4, Errc::config, "up blocks need filters > 0 and kernel 4");
  for (const auto& f : dropped_features) feature_slots(f);
}

KeyValues UNetConfig::to_keys() const {
  std::string drops;
  for (std::size_t i = 0; i < dropped_features.size(); ++i) drops += (i ? "," : "") + dropped_features[i];
  return {{"input_size", std::to_string(input_size)},
          {"down", blocks_to_text(down)},
          {"up", blocks_to_text(up)},
          {"seed", std::to_string(seed)},
          {"dropped_features", drops}};
}

UNetConfig UNetConfig::from_keys(const KeyValues& kv) {
  auto at = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), Errc::config, std::string("missing network key ") + key);
    return it->second;
  };
  UNetConfig c;
  c.input_size = parse_int(at("input_size"), "input_size");
  c.down = blocks_from_text(at("down"), "down");
  c.up = blocks_from_text(at("up"), "up");
  c.seed = static_cast<std::uint64_t>(parse_int(at("seed"), "seed"));
  c.dropped_features.clear();
  for (const auto& f : split(at("dropped_features"), ',')) {
    if (!trim(f).empty()) c.dropped_features.push_back(trim(f));
  }
  c.validate();
  return c;
}

const std::vector<std::string>& droppable_features() {
  static const std::vector<std::string> names{"mean_temp", "snow_depth", "orbit", "incidence",
                                              "satellite_id", "precip", "weather"};
  return names;
}

std::vector<Index> feature_slots(const std::string& feature) {
  std::vector<Index> block;
  if (feature == "mean_temp") block = {slot::kMeanTemp};
  else if (feature == "snow_depth") block = {slot::kSnowDepth};
  else if (feature == "orbit") block = {slot::kOrbit};
  else if (feature == "incidence") block = {slot::kIncidence};
  else if (feature == "satellite_id") block = {slot::kSatellite};
  else if (feature == "precip") block = {5, 6, 7, 8};
  else if (feature == "weather") block = {slot::kMeanTemp, slot::kSnowDepth, 5, 6, 7, 8};
  else throw Error(Errc::config, "unknown feature '" + feature + "'");
  std::vector<Index> out;
  for (Index b = 0; b <= kPreviousImages; ++b) {
    for (Index s : block) out.push_back(b * AcquisitionConditions::kLength + s);
  }
  return out;
}

void apply_drops(Eigen::Ref<Eigen::MatrixXd> cond_rows, const std::vector<std::string>& dropped) {
  for (const auto& f : dropped) {
    for (Index s : feature_slots(f)) cond_rows.col(s).setZero();
  }
}

std::vector<Shape> param_shapes(const UNetConfig& config) {
  config.validate();
  std::vector<Shape> shapes;
  Index cin = kInputChannels;
  for (const auto& b : config.down) {
    shapes.push_back({b.kernel, b.kernel, cin, b.filters});
    shapes.push_back({1, 1, 1, b.filters});
    cin = b.filters;
  }
  cin += kConditionLength;
  const std::size_t nd = config.down.size();
  for (std::size_t j = 0; j < config.up.size(); ++j) {
    if (j > 0) cin = config.up[j - 1].filters + config.down[nd - 1 - j].filters;
    const auto& b = config.up[j];
    shapes.push_back({b.kernel, b.kernel, b.filters, cin});
    shapes.push_back({1, 1, 1, b.filters});
  }
  return shapes;
}

Index param_count(const UNetConfig& config) {
  Index n = 0;
  for (const auto& s : param_shapes(config)) n += s.size();
  return n;
}

std::vector<std::string> param_names(const UNetConfig& config) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < config.down.size(); ++i) {
    names.push_back("down" + std::to_string(i) + ".w");
    names.push_back("down" + std::to_string(i) + ".b");
  }
  for (std::size_t j = 0; j < config.up.size(); ++j) {
    names.push_back("up" + std::to_string(j) + ".w");
    names.push_back("up" + std::to_string(j) + ".b");
  }
  return names;
}

Model build_unet(const UNetConfig& config) {
  Model model;
  model.config = config;
  const auto shapes = param_shapes(config);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Tensor<float> t(shapes[i]);
    if (i % 2 == 0) {
      Rng rng = make_rng(config.seed, {0x756e6574, i});
      std::normal_distribution<double> normal(0.0, kInitStd);
      for (Index k = 0; k < t.size(); ++k) t.array()[k] = static_cast<float>(normal(rng));
    }
    model.params.push_back(std::move(t));
  }
  return model;
}

Tensor<float> forward_batch(const Model& model, const Tensor<float>& input, Eigen::MatrixXd cond,
                            const SkipMask* disabled_skips) {
  const Shape& s = input.shape();
  require(s.height == model.config.input_size && s.width == model.config.input_size, Errc::shape_mismatch,
          "input is " + s.str() + ", network expects " + std::to_string(model.config.input_size) + "x" +
              std::to_string(model.config.input_size));
  require(s.channels == kInputChannels, Errc::shape_mismatch,
          "input has " + std::to_string(s.channels) + " channels, expected " + std::to_string(kInputChannels));
  require(cond.rows() == s.batch && cond.cols() == kConditionLength, Errc::shape_mismatch,
          "condition matrix must be batch x 45");
  apply_drops(cond, model.config.dropped_features);

  ad::Tape<float> tape;
  std::vector<ad::Tape<float>::Var> vars;
  vars.reserve(model.params.size());
  for (const auto& p : model.params) vars.push_back(tape.constant(p));
  const auto x = tape.constant(input);
  const auto out = unet_graph(tape, model.config, vars, x, cond, disabled_skips);
  return tape.value(out);
}

Raster destandardize(const Tensor<float>& pred, Index batch_index, const NormStats& stats) {
  const Shape& s = pred.shape();
  require(s.channels == kOutputBands, Errc::shape_mismatch, "prediction must have 2 bands");
  Raster out(s.height, s.width, kOutputBands);
  const Index n = s.height * s.width * kOutputBands;
  const auto src = pred.array().segment(batch_index * n, n);
  for (Index i = 0; i < n; i += kOutputBands) {
    for (Index c = 0; c < kOutputBands; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      out.data()[i + c] = static_cast<float>(src[i + c] * stats.target_std[uc] + stats.target_mean[uc]);
    }
  }
  return out;
}

SarImage forward(const Model& model, const Raster& input_stack, const Eigen::VectorXd& cond_vec,
                 const SkipMask* disabled_skips) {
  require(cond_vec.size() == kConditionLength, Errc::shape_mismatch,
          "condition vector has " + std::to_string(cond_vec.size()) + " entries, expected 45");
  const Tensor<float> input = pack_batch<float>({&input_stack});
  const Tensor<float> pred = forward_batch(model, input, cond_vec.transpose(), disabled_skips);
  return SarImage::clamped(destandardize(pred, 0, model.stats));
}

SarImage predict(const Model& model, const SceneSample& sample) {
  return forward(model, stack_inputs(sample, model.stats),
                 encode_conditions(sample.prev_conditions, sample.target_conditions, model.stats));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ostringstream body;
  KeyValues kv = model.config.to_keys();
  kv["meta.epochs"] = std::to_string(model.meta.epochs);
  kv["meta.best_epoch"] = std::to_string(model.meta.best_epoch);
  kv["meta.final_train_mse"] = format_number(model.meta.final_train_mse);
  kv["meta.best_heldout_mse"] = format_number(model.meta.best_heldout_mse);
  const std::string text = render_key_values(kv);

  body.write(kCheckpointMagic, 4);
  put<std::uint32_t>(body, kCheckpointVersion);
  put<std::uint32_t>(body, static_cast<std::uint32_t>(text.size()));
  body.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto put_all = [&](const auto& arr) {
    for (double v : arr) put<double>(body, v);
  };
  put_all(model.stats.stack_mean);
  put_all(model.stats.stack_std);
  put_all(model.stats.cond_mean);
  put_all(model.stats.cond_std);
  put_all(model.stats.target_mean);
  put_all(model.stats.target_std);
  put<std::uint32_t>(body, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    const Shape& s = p.shape();
    write_raster(body, Raster(s.batch * s.height, s.width, s.channels, p.array()));
  }
  write_text_file(path, body.str());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_failure, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw Error(Errc::corrupt, path.string() + ": checkpoint header truncated");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw Error(Errc::bad_magic, path.string() + ": expected DNET");
  const auto version = get<std::uint32_t>(in, "header");
  if (version != kCheckpointVersion) {
    throw Error(Errc::version_mismatch, path.string() + ": checkpoint version " + std::to_string(version) +
                                            ", this build reads " + std::to_string(kCheckpointVersion));
  }
  const auto text_len = get<std::uint32_t>(in, "header");
  require(text_len < (1u << 20), Errc::corrupt, "config block length " + std::to_string(text_len));
  std::string text(text_len, '\0');
  in.read(text.data(), text_len);
  if (static_cast<std::uint32_t>(in.gcount()) != text_len) throw Error(Errc::corrupt, "checkpoint ends inside config");

  Model model;
  KeyValues kv;
  try {
    kv = parse_key_values(text, "checkpoint config");
    model.config = UNetConfig::from_keys(kv);
    model.meta.epochs = parse_int(kv.at("meta.epochs"), "meta.epochs");
    model.meta.best_epoch = parse_int(kv.at("meta.best_epoch"), "meta.best_epoch");
    model.meta.final_train_mse = parse_double(kv.at("meta.final_train_mse"), "meta.final_train_mse");
    model.meta.best_heldout_mse = parse_double(kv.at("meta.best_heldout_mse"), "meta.best_heldout_mse");
  } catch (const std::out_of_range&) {
    throw Error(Errc::corrupt, path.string() + ": config block lacks training metadata");
  } catch (const Error& e) {
    throw Error(Errc::corrupt, path.string() + ": " + e.what());
  }

  auto get_all = [&](auto& arr) {
    for (double& v : arr) v = get<double>(in, "normalization statistics");
  };
  get_all(model.stats.stack_mean);
  get_all(model.stats.stack_std);
  get_all(model.stats.cond_mean);
  get_all(model.stats.cond_std);
  get_all(model.stats.target_mean);
  get_all(model.stats.target_std);

  const auto shapes = param_shapes(model.config);
  const auto count = get<std::uint32_t>(in, "parameter count");
  require(count == shapes.size(), Errc::shape_mismatch,
          path.string() + ": " + std::to_string(count) + " parameter tensors, config implies " +
              std::to_string(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Raster r;
    try {
      r = read_raster(in);
    } catch (const Error& e) {
      throw Error(Errc::corrupt, path.string() + ": parameter " + std::to_string(i) + ": " + e.what());
    }
    const Shape& s = shapes[i];
    require(r.height() == s.batch * s.height && r.width() == s.width && r.channels() == s.channels,
            Errc::shape_mismatch, path.string() + ": parameter " + std::to_string(i) + " does not match " + s.str());
    model.params.emplace_back(s, r.data());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::corrupt, path.string() + ": trailing bytes");
  return model;
}

Model load_checkpoint(const std::filesystem::path& path, const UNetConfig& expected) {
  Model model = load_checkpoint(path);
  const auto want = param_shapes(expected);
  bool same = want.size() == model.params.size();
  for (std::size_t i = 0; same && i < want.size(); ++i) same = want[i] == model.params[i].shape();
  require(same, Errc::shape_mismatch, path.string() + ": parameter shapes differ from the requested network");
  return model;
}

}  // namespace diforge
