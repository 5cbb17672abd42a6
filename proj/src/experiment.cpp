#include "diforge/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <set>

#include "diforge/diffimage.hpp"
#include "diforge/rng.hpp"
#include "diforge/text_io.hpp"

namespace diforge {

namespace fs = std::filesystem;

namespace {

constexpr const char* kAuto = "auto";

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> list_value(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& item : split(text, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

LandClass parse_land_class(const std::string& text) {
  if (text == "forest") return kForest;
  if (text == "open") return kOpen;
  if (text == "water") return kWater;
  if (text == "bare") return kBare;
  throw Error(Errc::config, "unknown land class '" + text + "'");
}

std::string csv_field(const std::string& s) {
  require(s.find_first_of(",\n\"") == std::string::npos, Errc::invalid_argument, "report field contains a separator: " + s);
  return s;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void print_runtime(const char* command, const Stopwatch& watch) {
  std::cout << command << ": done in " << format_number(std::round(watch.seconds() * 10.0) / 10.0) << " s\n";
}

ReportRow row(const ExperimentConfig& c, std::string experiment, std::string variant, std::string metric, double value,
              Index n_pixels = 0) {
  return {std::move(experiment), std::move(variant), std::move(metric), value, n_pixels, c.hash, c.seed};
}

/// Test-split samples of the dataset, in manifest order.
struct TestSet {
  DatasetStore store;
  std::vector<std::size_t> indices;

  explicit TestSet(const fs::path& root) : store(root), indices(store.indices(SplitTag::test)) {
    require(!indices.empty(), Errc::insufficient_data, root.string() + ": dataset has no test samples");
  }
};

struct ChangedSample {
  SarImage target;
  Raster truth;
};

fs::path changed_target_path(const fs::path& dir, const std::string& id) { return dir / (id + ".target.dras"); }
fs::path changed_truth_path(const fs::path& dir, const std::string& id) { return dir / (id + ".truth.dras"); }

ChangedSample load_changed(const fs::path& dir, const std::string& id) {
  const fs::path t = changed_target_path(dir, id);
  require(fs::exists(t), Errc::missing_artifact, t.string() + " (run `di-forge change` first)");
  return {SarImage(read_raster(t)), read_raster(changed_truth_path(dir, id))};
}

Model load_model(const ExperimentConfig& config, const std::vector<std::string>& dropped) {
  const fs::path p = RunPaths{config.out_dir}.model(model_tag(dropped));
  require(fs::exists(p), Errc::missing_artifact, p.string() + " (run `di-forge train` first)");
  return load_checkpoint(p, config.net);
}

std::string strategy_name(int s) { return "conv" + std::to_string(s); }

void append_scores(const Raster& di, const Raster& truth, std::vector<double>& scores, std::vector<int>& labels) {
  for (Index p = 0; p < di.pixels(); ++p) {
    scores.push_back(di.data()[p]);
    labels.push_back(truth.data()[p] != 0.0f ? 1 : 0);
  }
}

/// Threshold AUC of the proposed method for `model` on one change variant.
RocCurve proposed_roc(const ExperimentConfig& config, const TestSet& test, const Model& model, ChangeMethod variant) {
  const fs::path dir = RunPaths{config.out_dir}.changes(variant);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i : test.indices) {
    const SceneSample s = test.store.load(i);
    const ChangedSample c = load_changed(dir, s.sample_id);
    append_scores(make_di_proposed(model, s, c.target, DiForm::scalar).raster, c.truth, scores, labels);
  }
  return roc_curve(scores, labels);
}

/// Vector-DI pixel datasets for the proposed method and conventional Method 1.
std::pair<PixelDataset, PixelDataset> svc_datasets(const ExperimentConfig& config, const TestSet& test,
                                                   const Model& model, ChangeMethod variant) {
  const fs::path dir = RunPaths{config.out_dir}.changes(variant);
  std::vector<LabeledImage> proposed, conventional;
  for (std::size_t i : test.indices) {
    const SceneSample s = test.store.load(i);
    ChangedSample c = load_changed(dir, s.sample_id);
    proposed.push_back({s.sample_id, make_di_proposed(model, s, c.target, DiForm::vector).raster, c.truth});
    conventional.push_back({s.sample_id, make_di_conventional(s, c.target, 1, DiForm::vector).raster, c.truth});
  }
  auto a = assemble_pixel_dataset(proposed, config.split_seed, config.split_fraction);
  auto b = assemble_pixel_dataset(conventional, config.split_seed, config.split_fraction);
  require_same_groups(a, b);
  return {std::move(a), std::move(b)};
}

double svc_eval(const ExperimentConfig& config, const PixelDataset& data, Index* rows) {
  const LinearSvc model = svc_train(data, config.svc);
  const SvcScore score = svc_accuracy(model, data, config.svc.seed);
  if (rows) *rows = score.rows;
  return score.accuracy;
}

std::string suffix_for(const std::vector<std::string>& dropped) {
  return dropped.empty() ? "" : "-" + model_tag(dropped);
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys{
      {"seed", ""},
      {"out_dir", "run"},
      {"dataset.seed", kAuto},
      {"dataset.num_worlds", "24"},
      {"dataset.dates_per_world", "100"},
      {"dataset.train_fraction", "0.87"},
      {"dataset.image_size", "64"},
      {"net.seed", kAuto},
      {"net.down", "16x4,32x4,64x4,64x4,64x4,64x2"},
      {"net.up", "64x4,64x4,64x4,32x4,16x4,2x4"},
      {"train.seed", kAuto},
      {"train.epochs", "60"},
      {"train.batch_size", "16"},
      {"train.lr", "0.0002"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.eps", "1e-08"},
      {"train.weight_decay", "0.0001"},
      {"train.patience", "8"},
      {"change.seed", kAuto},
      {"change.variants", "offset,statistical"},
      {"change.offset_db", "-2.5"},
      {"change.target_class", "open"},
      {"change.min_fraction", "0.01"},
      {"change.max_fraction", "0.05"},
      {"eval.strategies", "1,2,3"},
      {"eval.roc_points", "1000"},
      {"split.seed", kAuto},
      {"split.fraction", "0.7"},
      {"svc.seed", kAuto},
      {"svc.C", "1"},
      {"svc.epochs", "20"},
      {"ablate.features", "mean_temp,snow_depth,orbit,incidence,satellite_id,precip,weather"},
      {"drop_features", ""},
      {"sweep.samples", "8"},
      {"sweep.rain_mm", "20"},
      {"sweep.high_slope", "0.3"},
      {"sweep.flat_slope", "0.1"},
  };
  return keys;
}

ExperimentConfig parse_config(const std::string& text, const CliOverrides& overrides) {
  const KeyValues given = parse_key_values(text, "config");
  KeyValues kv;
  for (const auto& [k, v] : config_keys()) kv[k] = v;
  for (const auto& [k, v] : given) {
    require(kv.count(k) > 0, Errc::config, "unknown config key '" + k + "'");
    kv[k] = v;
  }
  require(given.count("seed") > 0 || overrides.seed.has_value(), Errc::config, "config must set `seed`");
  if (overrides.seed) kv["seed"] = std::to_string(*overrides.seed);
  if (overrides.out_dir) kv["out_dir"] = overrides.out_dir->string();
  {
    std::vector<std::string> drops = list_value(kv["drop_features"]);
    drops.insert(drops.end(), overrides.drop_features.begin(), overrides.drop_features.end());
    std::sort(drops.begin(), drops.end());
    drops.erase(std::unique(drops.begin(), drops.end()), drops.end());
    kv["drop_features"] = join(drops, ',');
  }

  auto num = [&](const std::string& k) { return parse_double(kv.at(k), k); };
  auto integer = [&](const std::string& k) { return parse_int(kv.at(k), k); };
  ExperimentConfig c;
  c.seed = static_cast<std::uint64_t>(integer("seed"));
  auto seed_of = [&](const std::string& k, std::uint64_t salt) {
    if (kv.at(k) == kAuto) kv[k] = std::to_string(derive_seed(c.seed, {salt}) >> 1);
    return static_cast<std::uint64_t>(integer(k));
  };
  c.out_dir = kv.at("out_dir");

  c.dataset.seed = seed_of("dataset.seed", 1);
  c.dataset.num_worlds = integer("dataset.num_worlds");
  c.dataset.dates_per_world = integer("dataset.dates_per_world");
  c.dataset.train_fraction = num("dataset.train_fraction");
  c.dataset.image_size = integer("dataset.image_size");
  require(c.dataset.num_worlds >= 1 && c.dataset.dates_per_world >= 6, Errc::config,
          "dataset needs at least 1 world and 6 dates");
  require(c.dataset.train_fraction > 0.0 && c.dataset.train_fraction < 1.0, Errc::config,
          "dataset.train_fraction must lie in (0, 1)");

  c.net.seed = seed_of("net.seed", 2);
  c.net.input_size = c.dataset.image_size;
  c.net = UNetConfig::from_keys({{"input_size", std::to_string(c.dataset.image_size)},
                                 {"down", kv.at("net.down")},
                                 {"up", kv.at("net.up")},
                                 {"seed", std::to_string(c.net.seed)},
                                 {"dropped_features", kv.at("drop_features")}});
  c.drop_features = c.net.dropped_features;

  c.train.shuffle_seed = seed_of("train.seed", 3);
  c.train.epochs = integer("train.epochs");
  c.train.batch_size = integer("train.batch_size");
  c.train.lr = num("train.lr");
  c.train.beta1 = num("train.beta1");
  c.train.beta2 = num("train.beta2");
  c.train.eps = num("train.eps");
  c.train.weight_decay = num("train.weight_decay");
  c.train.patience = integer("train.patience");
  c.train.validate();

  c.change_seed = seed_of("change.seed", 4);
  c.variants.clear();
  for (const auto& v : list_value(kv.at("change.variants"))) c.variants.push_back(parse_change_method(v));
  require(!c.variants.empty(), Errc::config, "change.variants is empty");
  c.change.offset_db = num("change.offset_db");
  c.change.target_class = parse_land_class(kv.at("change.target_class"));
  c.change.mask.min_fraction = num("change.min_fraction");
  c.change.mask.max_fraction = num("change.max_fraction");

  c.strategies.clear();
  for (const auto& s : list_value(kv.at("eval.strategies"))) {
    const auto v = static_cast<int>(parse_int(s, "eval.strategies"));
    require(v >= 1 && v <= 3, Errc::config, "eval.strategies entries must be 1, 2 or 3");
    c.strategies.push_back(v);
  }
  c.roc_points = static_cast<std::size_t>(integer("eval.roc_points"));

  c.split_seed = seed_of("split.seed", 5);
  c.split_fraction = num("split.fraction");
  c.svc.seed = seed_of("svc.seed", 6);
  c.svc.C = num("svc.C");
  c.svc.epochs = integer("svc.epochs");

  c.ablate_features = list_value(kv.at("ablate.features"));
  for (const auto& f : c.ablate_features) feature_slots(f);
  c.sweep_samples = integer("sweep.samples");
  c.sweep_rain_mm = num("sweep.rain_mm");
  c.high_slope = num("sweep.high_slope");
  c.flat_slope = num("sweep.flat_slope");

  KeyValues canon = kv;
  canon.erase("out_dir");
  c.canonical = render_key_values(canon);
  c.hash = hex64(fnv1a(c.canonical));
  return c;
}

ExperimentConfig load_config(const fs::path& path, const CliOverrides& overrides) {
  return parse_config(read_text_file(path), overrides);
}

std::string model_tag(std::vector<std::string> dropped) {
  if (dropped.empty()) return "full";
  std::sort(dropped.begin(), dropped.end());
  return "drop-" + join(dropped, '+');
}

void write_report(const fs::path& path, const std::vector<ReportRow>& rows) {
  std::string text = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    text += csv_field(r.experiment) + "," + csv_field(r.variant) + "," + csv_field(r.metric) + "," +
            format_number(r.value) + "," + std::to_string(r.n_pixels) + "," + r.config_hash + "," +
            std::to_string(r.seed) + "\n";
  }
  write_text_file(path, text);
}

std::vector<ReportRow> read_report(const fs::path& path) {
  const std::string text = read_text_file(path);
  const auto lines = split(text, '\n');
  require(!lines.empty() && trim(lines[0]) == kReportHeader, Errc::corrupt, path.string() + ": unexpected header");
  std::vector<ReportRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    require(f.size() == 7, Errc::corrupt, path.string() + ": line " + std::to_string(i + 1) + " has " +
                                              std::to_string(f.size()) + " fields");
    const std::string ctx = path.string() + ":" + std::to_string(i + 1);
    rows.push_back({f[0], f[1], f[2], parse_double(f[3], ctx), parse_int(f[4], ctx), f[5],
                    static_cast<std::uint64_t>(std::stoull(f[6]))});
  }
  return rows;
}

int cmd_gen(const ExperimentConfig& config) {
  Stopwatch watch;
  const RunPaths paths{config.out_dir};
  const Manifest manifest = gen_dataset(config.dataset, paths.data());
  std::size_t train = 0;
  for (const auto& e : manifest) train += e.split == SplitTag::train;
  std::cout << "gen: " << manifest.size() << " samples (" << train << " train, " << manifest.size() - train
            << " test) in " << paths.data().string() << "\n"
            << "gen: manifest hash " << hex64(fnv1a(read_text_file(paths.data() / "manifest.tsv"))) << "\n";
  print_runtime("gen", watch);
  return 0;
}

fs::path ensure_model(const ExperimentConfig& config, const std::vector<std::string>& dropped) {
  const RunPaths paths{config.out_dir};
  const std::string tag = model_tag(dropped);
  const fs::path path = paths.model(tag);
  if (fs::exists(path)) return path;

  DatasetStore store(paths.data());
  UNetConfig net = config.net;
  net.dropped_features = dropped;
  std::sort(net.dropped_features.begin(), net.dropped_features.end());
  std::cout << "train[" << tag << "]: " << param_count(net) << " parameters, " << store.indices(SplitTag::train).size()
            << " train / " << store.indices(SplitTag::test).size() << " held-out samples\n";
  Stopwatch watch;
  const TrainResult result = train(build_unet(net), store, config.train, [&](const EpochLoss& e) {
    std::cout << "train[" << tag << "]: epoch " << e.epoch << " train_mse " << format_number(e.train_mse)
              << " heldout_mse " << format_number(e.heldout_mse) << " (" << format_number(std::round(watch.seconds()))
              << " s)\n"
              << std::flush;
  });
  save_checkpoint(result.model, path);
  write_loss_curve(paths.loss_curve(tag), result.curve);

  const auto& m = result.model.meta;
  std::cout << "train[" << tag << "]: best epoch " << m.best_epoch << ", held-out MSE "
            << format_number(m.best_heldout_mse) << ", baseline MSE " << format_number(result.baseline_mse) << "\n";
  const std::string exp = "train-" + tag;
  write_report(paths.reports() / (exp + ".csv"),
               {row(config, exp, "test", "heldout_mse", m.best_heldout_mse),
                row(config, exp, "test", "baseline_mse", result.baseline_mse),
                row(config, exp, "test", "final_train_mse", m.final_train_mse),
                row(config, exp, "test", "epochs", static_cast<double>(m.epochs)),
                row(config, exp, "test", "best_epoch", static_cast<double>(m.best_epoch))});
  return path;
}

int cmd_train(const ExperimentConfig& config) {
  Stopwatch watch;
  const fs::path p = RunPaths{config.out_dir}.model(model_tag(config.drop_features));
  if (fs::exists(p)) fs::remove(p);
  const fs::path written = ensure_model(config, config.drop_features);
  std::cout << "train: wrote " << written.string() << "\n";
  print_runtime("train", watch);
  return 0;
}

int cmd_change(const ExperimentConfig& config) {
  Stopwatch watch;
  const RunPaths paths{config.out_dir};
  TestSet test(paths.data());
  std::vector<ReportRow> rows;
  for (ChangeMethod variant : config.variants) {
    const fs::path dir = paths.changes(variant);
    fs::create_directories(dir);
    ChangeConfig cc = config.change;
    cc.method = variant;
    std::string sidecar;
    std::array<Index, 4> k_counts{};
    Index changed_pixels = 0, total_pixels = 0;
    double shift_min = std::numeric_limits<double>::infinity(), shift_max = -shift_min;
    for (std::size_t i : test.indices) {
      const SceneSample s = test.store.load(i);
      // Seeded by sample only, so every variant shares the same masks.
      const std::uint64_t seed = derive_seed(config.change_seed, {fnv1a(s.sample_id)});
      const ChangeResult r = simulate_changes(s, test.store.class_map(i), seed, cc);
      for (const auto& w : r.warnings) std::cerr << "change: warning: " << w << "\n";
      write_raster(changed_target_path(dir, s.sample_id), r.target.raster());
      write_raster(changed_truth_path(dir, s.sample_id), r.truth);
      sidecar += s.sample_id + "\t" + std::to_string(r.applied) + "\t" + (r.applied ? to_string(variant) : "none") +
                 "\t" + format_number(r.mean_shift_db) + "\n";
      ++k_counts[static_cast<std::size_t>(r.applied)];
      changed_pixels += static_cast<Index>(r.truth.data().sum());
      total_pixels += r.truth.pixels();
      if (r.applied) {
        shift_min = std::min(shift_min, r.mean_shift_db);
        shift_max = std::max(shift_max, r.mean_shift_db);
      }
    }
    write_text_file(dir / "changes.tsv", sidecar);
    const std::string v = to_string(variant);
    rows.push_back(row(config, "change", v, "changed_fraction",
                       static_cast<double>(changed_pixels) / static_cast<double>(total_pixels), changed_pixels));
    if (std::isfinite(shift_min)) {
      rows.push_back(row(config, "change", v, "mean_shift_min", shift_min));
      rows.push_back(row(config, "change", v, "mean_shift_max", shift_max));
    }
    for (std::size_t k = 0; k < 4; ++k) {
      rows.push_back(row(config, "change", v, "k" + std::to_string(k), static_cast<double>(k_counts[k])));
    }
    std::cout << "change[" << v << "]: " << test.indices.size() << " samples, changed fraction "
              << format_number(static_cast<double>(changed_pixels) / static_cast<double>(total_pixels)) << "\n";
  }
  write_report(paths.reports() / "changes.csv", rows);
  print_runtime("change", watch);
  return 0;
}

int cmd_eval_threshold(const ExperimentConfig& config) {
  Stopwatch watch;
  const RunPaths paths{config.out_dir};
  TestSet test(paths.data());
  const Model model = load_model(config, config.drop_features);
  const std::string suffix = suffix_for(config.drop_features);
  std::vector<ReportRow> rows;
  for (ChangeMethod variant : config.variants) {
    const std::string v = to_string(variant);
    const fs::path dir = paths.changes(variant);
    std::vector<double> proposed;
    std::map<int, std::vector<double>> conventional;
    std::vector<int> labels;
    for (std::size_t i : test.indices) {
      const SceneSample s = test.store.load(i);
      const ChangedSample c = load_changed(dir, s.sample_id);
      std::vector<int> ignored;
      append_scores(make_di_proposed(model, s, c.target, DiForm::scalar).raster, c.truth, proposed, labels);
      if (!suffix.empty()) continue;
      for (int strategy : config.strategies) {
        append_scores(make_di_conventional(s, c.target, strategy, DiForm::scalar).raster, c.truth,
                      conventional[strategy], ignored);
      }
    }
    auto emit = [&](const std::string& name, const std::vector<double>& scores) {
      const RocCurve roc = roc_curve(scores, labels);
      write_roc_csv(paths.roc() / (v + "_" + name + ".csv"), thin_roc(roc, config.roc_points));
      rows.push_back(row(config, "threshold-" + name, v, "auc", roc.auc, static_cast<Index>(scores.size())));
      std::cout << "eval-threshold[" << v << "]: " << name << " AUC " << format_number(roc.auc) << "\n";
    };
    emit("proposed" + suffix, proposed);
    for (const auto& [strategy, scores] : conventional) emit(strategy_name(strategy), scores);
  }
  write_report(paths.reports() / ("threshold" + suffix + ".csv"), rows);
  print_runtime("eval-threshold", watch);
  return 0;
}

int cmd_eval_svc(const ExperimentConfig& config) {
  Stopwatch watch;
  const RunPaths paths{config.out_dir};
  TestSet test(paths.data());
  const Model model = load_model(config, config.drop_features);
  const std::string suffix = suffix_for(config.drop_features);
  std::vector<ReportRow> rows;
  for (ChangeMethod variant : config.variants) {
    const std::string v = to_string(variant);
    const auto [proposed, conventional] = svc_datasets(config, test, model, variant);
    const auto hash = static_cast<double>(split_hash(proposed));
    Index n = 0;
    const double acc_p = svc_eval(config, proposed, &n);
    rows.push_back(row(config, "svc-proposed" + suffix, v, "accuracy", acc_p, n));
    rows.push_back(row(config, "svc-proposed" + suffix, v, "split_hash", hash, proposed.rows()));
    std::cout << "eval-svc[" << v << "]: proposed accuracy " << format_number(acc_p) << "\n";
    if (suffix.empty()) {
      const double acc_c = svc_eval(config, conventional, &n);
      rows.push_back(row(config, "svc-conv1", v, "accuracy", acc_c, n));
      rows.push_back(row(config, "svc-conv1", v, "split_hash", static_cast<double>(split_hash(conventional)),
                         conventional.rows()));
      std::cout << "eval-svc[" << v << "]: conv1 accuracy " << format_number(acc_c) << "\n";
    }
  }
  write_report(paths.reports() / ("svc" + suffix + ".csv"), rows);
  print_runtime("eval-svc", watch);
  return 0;
}

int cmd_ablate(const ExperimentConfig& config) {
  Stopwatch watch;
  const RunPaths paths{config.out_dir};
  TestSet test(paths.data());
  std::vector<ReportRow> rows;
  for (const std::string& feature : config.ablate_features) {
    ensure_model(config, {feature});
    const Model model = load_model(config, {feature});
    const std::string exp = "ablate-drop-" + feature;
    for (ChangeMethod variant : config.variants) {
      const std::string v = to_string(variant);
      const RocCurve roc = proposed_roc(config, test, model, variant);
      rows.push_back(row(config, exp, v, "auc", roc.auc));
      const auto [proposed, conventional] = svc_datasets(config, test, model, variant);
      Index n = 0;
      const double acc = svc_eval(config, proposed, &n);
      rows.push_back(row(config, exp, v, "accuracy", acc, n));
      std::cout << "ablate[" << feature << "][" << v << "]: AUC " << format_number(roc.auc) << ", accuracy "
                << format_number(acc) << "\n";
    }
  }
  write_report(paths.reports() / "ablate.csv", rows);
  print_runtime("ablate", watch);
  return 0;
}

int cmd_sweep(const ExperimentConfig& config) {
  Stopwatch watch;
  const RunPaths paths{config.out_dir};
  TestSet test(paths.data());
  const Model model = load_model(config, config.drop_features);

  struct Stratum {
    const char* name;
    double orbit_sum = 0.0, rain_sum = 0.0;
    Index count = 0;
  };
  std::array<Stratum, 4> strata{{{"high-slope"}, {"flat-forest"}, {"open"}, {"forest"}}};
  double none_max = 0.0;
  Index none_pixels = 0;

  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max<Index>(config.sweep_samples, 1)), test.indices.size());
  for (std::size_t k = 0; k < n; ++k) {
    // Spread the probes over the test split.
    const std::size_t i = test.indices[k * test.indices.size() / n];
    const SceneSample s = test.store.load(i);
    const Raster classes = test.store.class_map(i);
    const Raster stack = stack_inputs(s, model.stats);
    auto render = [&](const AcquisitionConditions& target) {
      return forward(model, stack, encode_conditions(s.prev_conditions, target, model.stats));
    };
    const SarImage base = render(s.target_conditions);
    AcquisitionConditions flipped = s.target_conditions;
    flipped.orbit_ascending = 1 - flipped.orbit_ascending;
    AcquisitionConditions dry = s.target_conditions, wet = s.target_conditions;
    dry.precip.fill(0.0);
    wet.precip.fill(config.sweep_rain_mm);

    const Raster orbit = di_scalar(render(flipped), base);
    const Raster rain = di_scalar(render(wet), render(dry));
    const Raster none = di_scalar(render(s.target_conditions), base);
    write_raster(paths.sweep() / (s.sample_id + "_orbit.dras"), orbit);
    write_raster(paths.sweep() / (s.sample_id + "_rain.dras"), rain);
    write_raster(paths.sweep() / (s.sample_id + "_none.dras"), none);
    none_max = std::max(none_max, static_cast<double>(none.data().maxCoeff()));
    none_pixels += none.pixels();

    const Raster slope = look_slope(s.dem, s.target_conditions);
    for (Index p = 0; p < orbit.pixels(); ++p) {
      const auto cls = static_cast<LandClass>(classes.data()[p]);
      const double sl = std::abs(slope.data()[p]);
      const bool member[4] = {sl > config.high_slope, cls == kForest && sl < config.flat_slope, cls == kOpen,
                              cls == kForest};
      for (std::size_t g = 0; g < 4; ++g) {
        if (!member[g]) continue;
        strata[g].orbit_sum += orbit.data()[p];
        strata[g].rain_sum += rain.data()[p];
        ++strata[g].count;
      }
    }
  }

  std::vector<ReportRow> rows;
  for (const auto& st : strata) {
    const double denom = st.count ? static_cast<double>(st.count) : 1.0;
    rows.push_back(row(config, "sweep-orbit", st.name, "mean_abs_diff", st.orbit_sum / denom, st.count));
    rows.push_back(row(config, "sweep-rain", st.name, "mean_abs_diff", st.rain_sum / denom, st.count));
    std::cout << "sweep: " << st.name << " (" << st.count << " px) orbit " << format_number(st.orbit_sum / denom)
              << " rain " << format_number(st.rain_sum / denom) << "\n";
  }
  rows.push_back(row(config, "sweep-none", "all", "max_abs_diff", none_max, none_pixels));
  write_report(paths.reports() / ("sweep" + suffix_for(config.drop_features) + ".csv"), rows);
  print_runtime("sweep", watch);
  return 0;
}

std::vector<AssertionResult> check_assertions(const std::vector<ReportRow>& rows) {
  std::map<std::string, double> v;
  for (const auto& r : rows) v[r.experiment + "|" + r.variant + "|" + r.metric] = r.value;
  auto get = [&](const std::string& e, const std::string& var, const std::string& m) -> std::optional<double> {
    auto it = v.find(e + "|" + var + "|" + m);
    if (it == v.end()) return std::nullopt;
    return it->second;
  };
  std::vector<AssertionResult> out;
  using S = AssertionResult::Status;
  auto check = [&](std::string name, std::initializer_list<std::optional<double>> inputs, auto predicate,
                   auto describe) {
    for (const auto& x : inputs) {
      if (!x) {
        out.push_back({std::move(name), S::skip, "inputs not present"});
        return;
      }
    }
    std::vector<double> xs;
    for (const auto& x : inputs) xs.push_back(*x);
    out.push_back({std::move(name), predicate(xs) ? S::pass : S::fail, describe(xs)});
  };
  auto fmt = [](double x) { return format_number(std::round(x * 1e4) / 1e4); };

  const auto p_off = get("threshold-proposed", "offset", "auc");
  const auto c1_off = get("threshold-conv1", "offset", "auc");
  const auto c3_off = get("threshold-conv3", "offset", "auc");
  const auto p_st = get("threshold-proposed", "statistical", "auc");
  const auto c1_st = get("threshold-conv1", "statistical", "auc");

  check("train: held-out MSE < 0.9 x baseline", {get("train-full", "test", "heldout_mse"), get("train-full", "test", "baseline_mse")},
        [](auto& x) { return x[0] < 0.9 * x[1]; },
        [&](auto& x) { return "heldout " + fmt(x[0]) + " vs 0.9 x " + fmt(x[1]); });
  check("threshold offset: proposed >= conv1 + 0.03", {p_off, c1_off}, [](auto& x) { return x[0] >= x[1] + 0.03; },
        [&](auto& x) { return fmt(x[0]) + " vs " + fmt(x[1]); });
  check("threshold statistical: proposed > conv1", {p_st, c1_st}, [](auto& x) { return x[0] > x[1]; },
        [&](auto& x) { return fmt(x[0]) + " vs " + fmt(x[1]); });
  check("threshold: statistical AUCs below offset AUCs", {p_st, p_off, c1_st, c1_off},
        [](auto& x) { return x[0] < x[1] && x[2] < x[3]; },
        [&](auto& x) { return "proposed " + fmt(x[0]) + " < " + fmt(x[1]) + ", conv1 " + fmt(x[2]) + " < " + fmt(x[3]); });
  check("strategies offset: conv1 >= conv3", {c1_off, c3_off}, [](auto& x) { return x[0] >= x[1]; },
        [&](auto& x) { return fmt(x[0]) + " vs " + fmt(x[1]); });
  for (const char* var : {"offset", "statistical"}) {
    check(std::string("svc ") + var + ": proposed > conv1",
          {get("svc-proposed", var, "accuracy"), get("svc-conv1", var, "accuracy")},
          [](auto& x) { return x[0] > x[1]; }, [&](auto& x) { return fmt(x[0]) + " vs " + fmt(x[1]); });
    check(std::string("svc ") + var + ": identical split hash",
          {get("svc-proposed", var, "split_hash"), get("svc-conv1", var, "split_hash")},
          [](auto& x) { return x[0] == x[1]; }, [&](auto& x) { return hex64(static_cast<std::uint64_t>(x[0])) + " vs " + hex64(static_cast<std::uint64_t>(x[1])); });
  }
  check("no-weather offset: conv1 <= proposed-drop-weather <= proposed + 0.01",
        {get("threshold-proposed-drop-weather", "offset", "auc"), c1_off, p_off},
        [](auto& x) { return x[0] >= x[1] && x[0] <= x[2] + 0.01; },
        [&](auto& x) { return fmt(x[1]) + " <= " + fmt(x[0]) + " <= " + fmt(x[2]) + " + 0.01"; });
  check("sweep orbit: high-slope > flat-forest",
        {get("sweep-orbit", "high-slope", "mean_abs_diff"), get("sweep-orbit", "flat-forest", "mean_abs_diff")},
        [](auto& x) { return x[0] > x[1]; }, [&](auto& x) { return fmt(x[0]) + " vs " + fmt(x[1]); });
  check("sweep rain: open > forest",
        {get("sweep-rain", "open", "mean_abs_diff"), get("sweep-rain", "forest", "mean_abs_diff")},
        [](auto& x) { return x[0] > x[1]; }, [&](auto& x) { return fmt(x[0]) + " vs " + fmt(x[1]); });
  check("sweep none: zero difference", {get("sweep-none", "all", "max_abs_diff")},
        [](auto& x) { return x[0] == 0.0; }, [&](auto& x) { return "max " + fmt(x[0]); });
  check("ablate offset: drop orbit <= drop satellite_id (accuracy)",
        {get("ablate-drop-orbit", "offset", "accuracy"), get("ablate-drop-satellite_id", "offset", "accuracy")},
        [](auto& x) { return x[0] <= x[1]; }, [&](auto& x) { return fmt(x[0]) + " vs " + fmt(x[1]); });
  return out;
}

int cmd_report(const ExperimentConfig& config) {
  const RunPaths paths{config.out_dir};
  std::vector<fs::path> files;
  if (fs::exists(paths.reports())) {
    for (const auto& e : fs::directory_iterator(paths.reports())) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
  }
  if (files.empty()) {
    throw Error(Errc::missing_artifact, "no reports under " + paths.reports().string() +
                                            "; expected any of train-full.csv, changes.csv, threshold.csv, svc.csv, "
                                            "sweep.csv, ablate.csv");
  }
  std::sort(files.begin(), files.end());
  std::vector<ReportRow> rows;
  for (const auto& f : files) {
    const auto r = read_report(f);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.experiment, a.variant, a.metric) < std::tie(b.experiment, b.variant, b.metric);
  });
  write_report(paths.root / "summary.csv", rows);

  std::string text = "di-forge report (config " + config.hash + ", seed " + std::to_string(config.seed) + ")\n\n";
  std::string last;
  for (const auto& r : rows) {
    if (r.experiment != last) text += r.experiment + "\n";
    last = r.experiment;
    text += "  " + r.variant + " " + r.metric + " = " + format_number(r.value);
    if (r.n_pixels) text += " (n=" + std::to_string(r.n_pixels) + ")";
    text += "\n";
  }
  text += "\nassertions\n";
  int failures = 0;
  for (const auto& a : check_assertions(rows)) {
    const char* tag = a.status == AssertionResult::Status::pass ? "PASS"
                      : a.status == AssertionResult::Status::fail ? "FAIL"
                                                                   : "SKIP";
    failures += a.status == AssertionResult::Status::fail;
    text += std::string("  ") + tag + "  " + a.name + ": " + a.detail + "\n";
  }
  write_text_file(paths.root / "summary.txt", text);
  std::cout << text;
  return failures ? 1 : 0;
}

}  // namespace diforge
