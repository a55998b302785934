#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/config.hpp"
#include "ptlab/encoder.hpp"
#include "ptlab/task.hpp"
#include "ptlab/trainer.hpp"

namespace ptlab {

/// Accuracy of the learnable prompts on the test samples of one split,
/// classifying among that split's classes only.
double evaluate_accuracy(const TrainedModel& model, const FewShotTask& task, Split split,
                         const SyntheticTextEncoder& encoder);

/// Same protocol with the hand-crafted embeddings (zero-shot baseline).
double evaluate_zero_shot(const FewShotTask& task, Split split, double tau);

/// Split-restricted accuracy for arbitrary class embeddings: `rows` holds one
/// embedding per class of `split`, in the split's class order.
double split_accuracy(const Tensor& rows, const FewShotTask& task, Split split, double tau);

/// 2ab / (a + b), 0 when both are 0. Accepts fractions or percentages
/// (values in [0, 100]); throws DomainError otherwise.
double harmonic_mean(double a_base, double a_new);

struct RunResult {
  std::string method;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  double base_acc = 0.0;
  double new_acc = 0.0;
  double hm = 0.0;
};

struct AggregateRow {
  std::string method;
  std::size_t shots = 0;
  double base_acc = 0.0;      // mean over seeds
  double new_acc = 0.0;       // mean over seeds
  double hm = 0.0;            // harmonic mean of the two means
  double mean_seed_hm = 0.0;  // mean of per-seed harmonic means
};

struct EvalReport {
  std::string title;
  std::vector<RunResult> runs;      // sorted by (method, shots, seed)
  std::vector<AggregateRow> rows;   // sorted by (method, shots)
  nlohmann::json config;
  std::vector<std::string> warnings;
  double seconds = 0.0;             // wall time; never rendered

  std::vector<std::string> methods() const;
  std::vector<std::size_t> shots() const;
  std::vector<std::uint64_t> seeds() const;

  /// Sorts runs and recomputes the aggregate rows.
  void finalize();
  const AggregateRow& row(std::string_view method, std::size_t shots) const;
};

struct PreparedTask {
  FewShotTask task;
  SyntheticTextEncoder encoder;
};

/// Generates the seed's task with a pool of max(shots) samples per base
/// class and keeps a seeded K-shot subset for training.
PreparedTask prepare_task(const RunConfig& config, std::size_t shots, std::uint64_t seed);

/// Trains (unless `method` is "zeroshot") and evaluates both splits.
/// Besides the four training methods, accepts "ours_mi" (no mixup) and
/// "ours_mi_aug" (mixup on), the ablation variants of "ours".
RunResult run_method(const RunConfig& config, std::string_view method, const PreparedTask& prepared,
                     std::size_t shots, std::uint64_t seed);

/// Every (method, K, seed) combination, aggregated over seeds.
EvalReport base_new_protocol(const RunConfig& config, std::span<const std::string> methods,
                             std::span<const std::size_t> shots, std::span<const std::uint64_t> seeds);

/// Baseline (coop), "+MI loss" (ours without mixup) and "+MI loss+Aug"
/// (ours with mixup) on the configured shots and seeds.
EvalReport ablation_run(const RunConfig& config);

}  // namespace ptlab
