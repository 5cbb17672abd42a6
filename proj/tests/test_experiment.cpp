#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include "diforge/experiment.hpp"
#include "test_util.hpp"

using namespace diforge;
namespace fs = std::filesystem;

namespace {

ReportRow rr(std::string e, std::string v, std::string m, double x) { return {e, v, m, x, 0, "h", 1}; }

/// Rows that satisfy every ordering assertion.
std::vector<ReportRow> passing_rows() {
  return {
      rr("train-full", "test", "heldout_mse", 0.4),        rr("train-full", "test", "baseline_mse", 0.8),
      rr("threshold-proposed", "offset", "auc", 0.9),      rr("threshold-conv1", "offset", "auc", 0.8),
      rr("threshold-conv3", "offset", "auc", 0.7),         rr("threshold-proposed", "statistical", "auc", 0.75),
      rr("threshold-conv1", "statistical", "auc", 0.7),    rr("svc-proposed", "offset", "accuracy", 0.9),
      rr("svc-conv1", "offset", "accuracy", 0.8),          rr("svc-proposed", "offset", "split_hash", 7),
      rr("svc-conv1", "offset", "split_hash", 7),          rr("svc-proposed", "statistical", "accuracy", 0.7),
      rr("svc-conv1", "statistical", "accuracy", 0.6),     rr("svc-proposed", "statistical", "split_hash", 9),
      rr("svc-conv1", "statistical", "split_hash", 9),     rr("threshold-proposed-drop-weather", "offset", "auc", 0.85),
      rr("sweep-orbit", "high-slope", "mean_abs_diff", 2), rr("sweep-orbit", "flat-forest", "mean_abs_diff", 1),
      rr("sweep-rain", "open", "mean_abs_diff", 1),        rr("sweep-rain", "forest", "mean_abs_diff", 0.5),
      rr("sweep-none", "all", "max_abs_diff", 0),          rr("ablate-drop-orbit", "offset", "accuracy", 0.7),
      rr("ablate-drop-satellite_id", "offset", "accuracy", 0.8),
  };
}

int count(const std::vector<AssertionResult>& r, AssertionResult::Status s) {
  return static_cast<int>(std::count_if(r.begin(), r.end(), [&](const auto& a) { return a.status == s; }));
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DIFORGE_CLI) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndDerivedSeeds) {
  const ExperimentConfig a = parse_config("seed = 4\n");
  EXPECT_EQ(a.seed, 4u);
  EXPECT_EQ(a.dataset.image_size, 64);
  EXPECT_EQ(a.train.epochs, 60);
  EXPECT_EQ(a.svc.epochs, 20);
  EXPECT_EQ(a.strategies, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(a.net, UNetConfig{a.net});
  EXPECT_NE(a.dataset.seed, a.net.seed);
  EXPECT_NE(a.split_seed, a.svc.seed);

  const ExperimentConfig b = parse_config("seed = 5\n");
  EXPECT_NE(a.dataset.seed, b.dataset.seed);
  EXPECT_NE(a.hash, b.hash);
  EXPECT_EQ(parse_config("seed = 4\n").hash, a.hash);

  // Explicit sub-seeds are kept as given.
  EXPECT_EQ(parse_config("seed = 4\ndataset.seed = 77\n").dataset.seed, 77u);
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
  const ExperimentConfig a = parse_config("seed = 1\nout_dir = x\n");
  const ExperimentConfig b = parse_config("seed = 1\nout_dir = y\n");
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_EQ(b.out_dir, fs::path("y"));
  EXPECT_NE(parse_config("seed = 1\ntrain.lr = 0.001\n").hash, a.hash);
  CliOverrides o;
  o.out_dir = "z";
  o.seed = 1;
  EXPECT_EQ(parse_config("seed = 9\n", o).hash, a.hash);
}

TEST(Config, RejectsBadInput) {
  auto code = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "accepted: " << text;
    return Errc::invalid_argument;
  };
  EXPECT_EQ(code("out_dir = x\n"), Errc::config);  // no seed
  EXPECT_EQ(code("seed = 1\ntrain.learning_rate = 1\n"), Errc::config);
  EXPECT_EQ(code("seed = 1\neval.strategies = 1,4\n"), Errc::config);
  EXPECT_EQ(code("seed = 1\ndataset.train_fraction = 1.5\n"), Errc::config);
  EXPECT_EQ(code("seed = 1\ndataset.image_size = 48\n"), Errc::config);
  EXPECT_EQ(code("seed = 1\nchange.variants = offset,shift\n"), Errc::config);
  EXPECT_EQ(code("seed = 1\nchange.target_class = urban\n"), Errc::config);
  EXPECT_EQ(code("seed = 1\ndrop_features = humidity\n"), Errc::config);
  EXPECT_EQ(code("seed = 1\ntrain.batch_size = 0\n"), Errc::config);
  EXPECT_NE(code("seed = one\n"), Errc::invalid_argument);
}

TEST(Config, DropFeaturesMergeWithTheCommandLine) {
  CliOverrides o;
  o.drop_features = {"orbit", "weather"};
  const ExperimentConfig c = parse_config("seed = 1\ndrop_features = orbit\n", o);
  EXPECT_EQ(c.drop_features, (std::vector<std::string>{"orbit", "weather"}));
  EXPECT_EQ(c.net.dropped_features, c.drop_features);
  EXPECT_EQ(model_tag(c.drop_features), "drop-orbit+weather");
  EXPECT_EQ(model_tag({}), "full");
  EXPECT_EQ(model_tag({"weather", "orbit"}), "drop-orbit+weather");
}

TEST(Reports, RoundTripAndHeader) {
  TempDir dir;
  const std::vector<ReportRow> rows{{"threshold-proposed", "offset", "auc", 0.8125, 4096, "abc", 3}};
  write_report(dir.path() / "r.csv", rows);
  EXPECT_EQ(read_file(dir.path() / "r.csv"),
            "experiment,variant,metric,value,n_pixels,config_hash,seed\nthreshold-proposed,offset,auc,0.8125,4096,abc,3\n");
  const auto back = read_report(dir.path() / "r.csv");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].value, 0.8125);
  EXPECT_EQ(back[0].n_pixels, 4096);
  write_text_file(dir.path() / "bad.csv", "a,b\n");
  EXPECT_THROW(read_report(dir.path() / "bad.csv"), Error);
  EXPECT_THROW(write_report(dir.path() / "x.csv", {{"a,b", "v", "m", 1, 0, "h", 1}}), Error);
}

TEST(Reports, AssertionsPassSkipAndCatchEachViolation) {
  const auto good = check_assertions(passing_rows());
  EXPECT_EQ(count(good, AssertionResult::Status::fail), 0);
  EXPECT_EQ(count(good, AssertionResult::Status::skip), 0);
  EXPECT_EQ(count(check_assertions({}), AssertionResult::Status::skip), static_cast<int>(good.size()));

  // Break one input at a time; exactly the assertions that read it must fail.
  struct Fault {
    std::string key;
    double value;
    int failures;
  };
  const std::vector<Fault> faults{
      {"train-full|test|heldout_mse", 0.75, 1},
      {"threshold-proposed|offset|auc", 0.82, 2},  // margin and no-weather upper bound
      {"threshold-conv3|offset|auc", 0.81, 1},
      {"threshold-proposed|statistical|auc", 0.65, 1},
      {"threshold-conv1|statistical|auc", 0.85, 2},
      {"svc-conv1|offset|accuracy", 0.9, 1},
      {"svc-conv1|statistical|split_hash", 8, 1},
      {"threshold-proposed-drop-weather|offset|auc", 0.79, 1},
      {"sweep-orbit|flat-forest|mean_abs_diff", 2, 1},
      {"sweep-rain|forest|mean_abs_diff", 1, 1},
      {"sweep-none|all|max_abs_diff", 1e-7, 1},
      {"ablate-drop-orbit|offset|accuracy", 0.81, 1},
  };
  for (const auto& f : faults) {
    auto rows = passing_rows();
    bool hit = false;
    for (auto& r : rows) {
      if (r.experiment + "|" + r.variant + "|" + r.metric == f.key) {
        r.value = f.value;
        hit = true;
      }
    }
    ASSERT_TRUE(hit) << f.key;
    EXPECT_EQ(count(check_assertions(rows), AssertionResult::Status::fail), f.failures) << f.key;
  }
}

// End-to-end runs of the command line on a tiny configuration.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    config_ = dir_->path() / "tiny.cfg";
    write_text_file(config_,
                    "seed = 11\n"
                    "out_dir = " + (dir_->path() / "a").string() + "\n"
                    "dataset.num_worlds = 3\n"
                    "dataset.dates_per_world = 16\n"
                    "dataset.image_size = 32\n"
                    "net.down = 4x4,8x4,8x4,8x4,8x2\n"
                    "net.up = 8x4,8x4,8x4,4x4,2x4\n"
                    "train.epochs = 2\n"
                    "train.batch_size = 8\n"
                    "svc.epochs = 3\n"
                    "ablate.features = orbit,satellite_id\n"
                    "sweep.samples = 2\n");
    for (const char* out : {"a", "b"}) {
      const std::string o = " --config " + config_.string() + " --out " + (dir_->path() / out).string();
      const fs::path log = dir_->path() / (std::string(out) + ".log");
      for (const char* cmd : {"gen", "train", "change", "eval-threshold", "eval-svc", "sweep", "ablate"}) {
        exit_codes_[std::string(out) + ":" + cmd] = run_cli(std::string(cmd) + o, log);
      }
      exit_codes_[std::string(out) + ":train-drop"] = run_cli("train" + o + " --drop-feature weather", log);
      exit_codes_[std::string(out) + ":eval-threshold-drop"] =
          run_cli("eval-threshold" + o + " --drop-feature weather", log);
      exit_codes_[std::string(out) + ":report"] = run_cli("report" + o, log);
    }
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static fs::path out(const char* which) { return dir_->path() / which; }

  static TempDir* dir_;
  static fs::path config_;
  static std::map<std::string, int> exit_codes_;
};

TempDir* Cli::dir_ = nullptr;
fs::path Cli::config_;
std::map<std::string, int> Cli::exit_codes_;

TEST_F(Cli, EveryCommandSucceeds) {
  for (const auto& [cmd, code] : exit_codes_) {
    if (cmd.ends_with(":report")) {
      EXPECT_TRUE(code == 0 || code == 1) << cmd;  // 1 = an ordering assertion failed
    } else {
      EXPECT_EQ(code, 0) << cmd << "\n" << read_file(dir_->path() / (cmd.substr(0, 1) + ".log"));
    }
  }
}

TEST_F(Cli, ReportsAreByteIdenticalAcrossReruns) {
  std::set<std::string> compared;
  for (const char* sub : {"reports", "roc", "models"}) {
    for (const auto& e : fs::directory_iterator(out("a") / sub)) {
      const fs::path rel = fs::relative(e.path(), out("a"));
      if (e.path().extension() != ".csv" && e.path().extension() != ".dnet") continue;
      ASSERT_TRUE(fs::exists(out("b") / rel)) << rel;
      EXPECT_EQ(read_file(e.path()), read_file(out("b") / rel)) << rel;
      compared.insert(rel.string());
    }
  }
  EXPECT_EQ(read_file(out("a") / "summary.csv"), read_file(out("b") / "summary.csv"));
  EXPECT_TRUE(compared.count("reports/threshold.csv"));
  EXPECT_TRUE(compared.count("reports/svc.csv"));
  EXPECT_TRUE(compared.count("models/full.dnet"));
  EXPECT_GE(compared.size(), 10u);
}

TEST_F(Cli, ReportStructure) {
  const fs::path a = out("a");
  std::set<std::string> experiments;
  for (const auto& r : read_report(a / "summary.csv")) {
    experiments.insert(r.experiment);
    EXPECT_EQ(r.seed, 11u);
  }
  for (const char* e : {"train-full", "train-drop-weather", "change", "threshold-proposed", "threshold-conv1",
                        "threshold-conv2", "threshold-conv3", "threshold-proposed-drop-weather", "svc-proposed",
                        "svc-conv1", "sweep-orbit", "sweep-rain", "sweep-none", "ablate-drop-orbit",
                        "ablate-drop-satellite_id"}) {
    EXPECT_TRUE(experiments.count(e)) << e;
  }
  // Two features x two variants x (auc, accuracy).
  EXPECT_EQ(read_report(a / "reports" / "ablate.csv").size(), 8u);
  // The sweep with unchanged conditions reproduces the base prediction exactly.
  for (const auto& r : read_report(a / "reports" / "sweep.csv")) {
    if (r.experiment == "sweep-none") { EXPECT_EQ(r.value, 0.0); }
  }
  EXPECT_TRUE(fs::exists(a / "summary.txt"));
  EXPECT_TRUE(fs::exists(a / "changes" / "offset" / "changes.tsv"));
  EXPECT_TRUE(fs::exists(a / "roc" / "offset_proposed.csv"));
  const std::string roc = read_file(a / "roc" / "offset_proposed.csv");
  EXPECT_EQ(roc.substr(0, roc.find('\n')), "threshold,fpr,tpr");
}

TEST_F(Cli, ErrorsMapToExitCodes) {
  const fs::path log = dir_->path() / "err.log";
  const std::string c = " --config " + config_.string();
  // Model exists nowhere under a fresh output directory.
  EXPECT_EQ(run_cli("eval-threshold" + c + " --out " + (dir_->path() / "empty").string(), log), 2);
  EXPECT_EQ(run_cli("report" + c + " --out " + (dir_->path() / "empty").string(), log), 2);
  EXPECT_NE(run_cli("frobnicate" + c, log), 0);
  EXPECT_NE(run_cli("gen --config /nonexistent.cfg", log), 0);
  EXPECT_NE(run_cli("gen" + c + " --drop-feature humidity", log), 0);
  EXPECT_NE(read_file(log).find("missing artifact"), std::string::npos);
}
