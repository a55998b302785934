#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ptlab/rng.hpp"
#include "ptlab/task.hpp"
#include "ptlab/tensor.hpp"

namespace ptlab {

inline constexpr double kMixupLambdaMin = 0.4;
inline constexpr double kMixupLambdaMax = 0.6;

/// Uniform on [0.4, 0.6].
double sample_lambda(Rng& rng);

struct MixupDraw {
  double lambda = 0.5;
  std::size_t index_a = 0;  // row of the first original in the batch
  std::size_t index_b = 0;
};

struct MixedSample {
  std::vector<double> raw;      // lambda * xa + (1 - lambda) * xb
  std::vector<double> feature;  // raw, renormalized to unit length
  std::vector<double> label;    // lambda * ya + (1 - lambda) * yb
};

/// Convex combination of two samples from distinct classes. Throws
/// PairingError when the label supports overlap and DomainError when lambda
/// lies outside [0.4, 0.6] or the mix has zero length.
MixedSample mixup_pair(std::span<const double> xa, std::span<const double> xb, std::span<const double> ya,
                       std::span<const double> yb, double lambda);

enum class SampleOrigin { original, mixed };

struct TrainingBatch {
  Tensor features;  // (B + B_mix) x d
  Tensor labels;    // (B + B_mix) x C_active soft labels
  std::vector<SampleOrigin> origin;
  std::vector<std::size_t> source_rows;  // train-set row of each original
  std::vector<MixupDraw> draws;          // one per mixed row

  std::size_t size() const noexcept { return origin.size(); }
};

/// Samples `batch_size` originals uniformly (without replacement while the
/// pool allows) and appends `mix_count` mixed rows built from uniformly chosen
/// distinct-class pairs among them. Labels are expressed over
/// `active_classes`. Throws ConfigError for batch_size < 2 and PairingError
/// when mixing is requested but the originals cover fewer than two classes.
TrainingBatch build_training_batch(const LabeledSamples& train, std::span<const std::size_t> active_classes,
                                   std::size_t batch_size, std::size_t mix_count, Rng& rng);

/// Exactly `shots` samples of every class in `classes`, drawn without
/// replacement, in class order. Throws ConfigError when a class has fewer
/// than `shots` candidates.
LabeledSamples few_shot_sample(const LabeledSamples& pool, std::span<const std::size_t> classes,
                               std::size_t shots, std::uint64_t seed);

}  // namespace ptlab
