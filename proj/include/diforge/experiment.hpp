#pragma once

// Experiment orchestration behind the di-forge command line. Every command
// reads one key=value config, writes under the configured output directory
// and emits CSV reports tagged with the config hash and seed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "diforge/change_sim.hpp"
#include "diforge/classifiers.hpp"
#include "diforge/dataset.hpp"
#include "diforge/trainer.hpp"
#include "diforge/unet.hpp"

namespace diforge {

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::vector<std::string> drop_features;
  std::optional<std::filesystem::path> out_dir;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  DatasetSpec dataset;
  UNetConfig net;
  TrainConfig train;
  std::vector<ChangeMethod> variants{ChangeMethod::offset, ChangeMethod::statistical};
  ChangeConfig change;
  std::uint64_t change_seed = 0;
  std::vector<int> strategies{1, 2, 3};
  double split_fraction = 0.7;
  std::uint64_t split_seed = 0;
  SvcOptions svc;
  std::vector<std::string> ablate_features;
  std::vector<std::string> drop_features;
  Index sweep_samples = 8;
  double sweep_rain_mm = 20.0;
  double high_slope = 0.3;
  double flat_slope = 0.1;
  std::size_t roc_points = 1000;

  /// Canonical `key = value` rendering of every resolved setting except the
  /// output directory; the config hash is taken over this text.
  std::string canonical;
  std::string hash;
};

/// Every key this parser accepts, with its default (empty = required).
const std::vector<std::pair<std::string, std::string>>& config_keys();

ExperimentConfig parse_config(const std::string& text, const CliOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const CliOverrides& overrides = {});

/// "full" or "drop-" followed by the sorted dropped features joined with '+'.
std::string model_tag(std::vector<std::string> dropped);

struct ReportRow {
  std::string experiment;
  std::string variant;
  std::string metric;
  double value = 0.0;
  Index n_pixels = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline constexpr const char* kReportHeader = "experiment,variant,metric,value,n_pixels,config_hash,seed";

void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_report(const std::filesystem::path& path);

/// Output layout.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path model(const std::string& tag) const { return root / "models" / (tag + ".dnet"); }
  std::filesystem::path loss_curve(const std::string& tag) const { return root / "models" / (tag + "_loss.csv"); }
  std::filesystem::path changes(ChangeMethod m) const { return root / "changes" / to_string(m); }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path roc() const { return root / "roc"; }
  std::filesystem::path sweep() const { return root / "sweep"; }
};

int cmd_gen(const ExperimentConfig& config);
int cmd_train(const ExperimentConfig& config);
int cmd_change(const ExperimentConfig& config);
int cmd_eval_threshold(const ExperimentConfig& config);
int cmd_eval_svc(const ExperimentConfig& config);
int cmd_ablate(const ExperimentConfig& config);
int cmd_sweep(const ExperimentConfig& config);
/// Merges every report under `<out>/reports`, writes summary.csv and
/// summary.txt and returns 1 when an ordering assertion fails.
int cmd_report(const ExperimentConfig& config);

struct AssertionResult {
  std::string name;
  enum class Status { pass, fail, skip } status = Status::skip;
  std::string detail;
};

/// Ordering checks over merged report rows.
std::vector<AssertionResult> check_assertions(const std::vector<ReportRow>& rows);

/// Trains (or reuses) the checkpoint for `dropped` and returns its path.
std::filesystem::path ensure_model(const ExperimentConfig& config, const std::vector<std::string>& dropped);

}  // namespace diforge
