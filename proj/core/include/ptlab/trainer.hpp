#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/encoder.hpp"
#include "ptlab/objectives.hpp"
#include "ptlab/prompt.hpp"
#include "ptlab/task.hpp"

namespace ptlab {

enum class Method { ours, coop, kgcoop, prograd };
enum class Schedule { constant, cosine };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);
std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view text);

struct TrainConfig {
  Method method = Method::ours;
  std::size_t epochs = 100;
  std::size_t batch = 4;
  /// Mixed rows per batch; unset means one per original for `ours` and none
  /// for the baselines (unless mixup_baselines is set).
  std::optional<std::size_t> mix_count;
  double learning_rate = 0.01;
  Schedule schedule = Schedule::constant;
  double lambda1 = 1.0;
  double lambda2 = 2.0;
  double kg_weight = 8.0;
  double tau = 0.01;
  std::size_t context_length = 16;
  std::uint64_t seed = 1;
  double init_scale = 0.02;
  std::size_t mi_hidden = 256;
  bool mixup_baselines = false;
  /// Finite-difference audit of one gradient entry per epoch (method ours).
  bool grad_audit = false;

  void validate() const;
  std::size_t effective_mix_count() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  double audit_error = 0.0;  // 0 unless grad_audit ran
};

struct TrainedModel {
  TrainConfig config;
  PromptContext context;
  std::optional<MIEstimator> estimator;
  std::vector<EpochRecord> history;
  std::uint64_t config_hash = 0;
  std::uint64_t task_hash = 0;
  std::size_t steps = 0;
};

/// Runs epochs x ceil(|train| / batch) gradient steps of the configured
/// method on the base classes of `task`. Deterministic given the seed.
/// Parameters are rounded to binary32 when training ends so that checkpoints
/// reproduce the model exactly. Throws TrainingError on divergence.
TrainedModel train(const TrainConfig& config, const FewShotTask& task, const SyntheticTextEncoder& encoder,
                   std::optional<PromptContext> initial_context = std::nullopt);

/// Removes the component of `g_ce` that opposes `g_general`; returns `g_ce`
/// unchanged when the two are not in conflict.
std::vector<double> prograd_project(std::span<const double> g_ce, std::span<const double> g_general);

/// p <- p - lr * g. Throws ShapeError on a size mismatch.
void optimizer_step(std::span<double> params, std::span<const double> grads, double lr);

/// Learning rate at `step` of `total_steps`.
double lr_at(Schedule schedule, std::size_t step, std::size_t total_steps, double base_lr);

}  // namespace ptlab
