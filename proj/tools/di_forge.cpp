// di-forge command line.

#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "diforge/experiment.hpp"

int main(int argc, char** argv) {
  using namespace diforge;
  static const std::map<std::string, int (*)(const ExperimentConfig&)> commands{
      {"gen", cmd_gen},           {"train", cmd_train},   {"change", cmd_change}, {"eval-threshold", cmd_eval_threshold},
      {"eval-svc", cmd_eval_svc}, {"ablate", cmd_ablate}, {"sweep", cmd_sweep},   {"report", cmd_report},
  };

  CLI::App app{"SAR change detection experiments with a learned mapping function"};
  std::string command;
  std::string config_path;
  std::vector<std::string> drops;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> names;
  for (const auto& [name, fn] : commands) names.push_back(name);
  app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(names));
  app.add_option("--config", config_path, "key = value experiment config")->required()->check(CLI::ExistingFile);
  app.add_option("--drop-feature", drops, "Zero a condition feature (repeatable)")
      ->check(CLI::IsMember(droppable_features()));
  auto* seed_opt = app.add_option("--seed", seed, "Override the master seed");
  auto* out_opt = app.add_option("--out", out, "Override the output directory");
  CLI11_PARSE(app, argc, argv);

  try {
    CliOverrides overrides;
    overrides.drop_features = drops;
    if (*seed_opt) overrides.seed = seed;
    if (*out_opt) overrides.out_dir = out;
    const ExperimentConfig config = load_config(config_path, overrides);
    std::cout << command << ": config " << config.hash << ", seed " << config.seed << ", out "
              << config.out_dir.string() << "\n";
    return commands.at(command)(config);
  } catch (const Error& e) {
    std::cerr << "di-forge " << command << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "di-forge " << command << ": unexpected failure: " << e.what() << "\n";
    return 3;
  }
}
