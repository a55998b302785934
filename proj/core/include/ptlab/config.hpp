#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/task.hpp"
#include "ptlab/trainer.hpp"

namespace ptlab {

enum class ReportFormat { markdown, csv };

/// Accepts "md", "markdown" and "csv".
ReportFormat parse_format(std::string_view text);

/// Everything an experiment run needs: task generation, training and
/// reporting settings. Loaded from UTF-8 JSON; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t num_classes = 10;
  std::size_t dim = 64;
  std::size_t hidden = 128;  // frozen text encoder width
  std::vector<std::size_t> shots{1, 2, 4, 8, 16};
  std::size_t test_per_class = 50;
  double noise_sigma = 0.3;
  double prototype_perturb = 0.2;
  TrainConfig train;  // method is chosen per run
  std::vector<std::string> methods{"coop", "kgcoop", "prograd", "ours"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = ".";
  ReportFormat format = ReportFormat::markdown;

  /// Throws ConfigError on unknown keys, wrong types or invalid values.
  static RunConfig from_json(const nlohmann::json& j);
  /// Throws ConfigError when the file is missing or not valid JSON.
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// A `--seed` override: replaces the seed and the seed list.
  void override_seed(std::uint64_t s);
  void validate() const;

  std::size_t max_shots() const;
  TaskSpec task_spec(std::size_t task_shots, std::uint64_t task_seed) const;
  TrainConfig train_config(Method method, std::uint64_t run_seed) const;
};

}  // namespace ptlab
