#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/embedding_store.hpp"
#include "ptlab/encoder.hpp"
#include "ptlab/tensor.hpp"

namespace ptlab {

enum class Split { base, novel };

std::string_view to_string(Split split);
/// Accepts "base" and "new".
Split parse_split(std::string_view text);

/// Arguments of synthetic task generation.
struct TaskSpec {
  std::size_t num_classes = 10;
  std::size_t dim = 64;
  std::size_t shots = 16;
  std::size_t test_per_class = 50;
  std::size_t context_length = 16;  // template length M
  double noise_sigma = 0.3;
  double prototype_perturb = 0.2;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
};

struct LabeledSamples {
  Tensor features;                  // N x d, unit rows
  std::vector<std::size_t> labels;  // class id of each row

  std::size_t size() const noexcept { return labels.size(); }
};

struct FewShotTask {
  TaskSpec spec;
  std::uint64_t encoder_seed = 0;
  std::size_t encoder_hidden = 0;

  Tensor class_tokens;     // C x d, c_i
  Tensor template_tokens;  // M x d, fixed hand-crafted template
  Tensor handcrafted;      // C x d, w_i = encode(template + c_i)
  LabeledSamples train;    // K samples of every base class
  LabeledSamples test;     // test_per_class samples of every class
  std::vector<std::size_t> base_class_ids;
  std::vector<std::size_t> new_class_ids;

  std::size_t num_classes() const noexcept { return spec.num_classes; }
  std::size_t dim() const noexcept { return spec.dim; }
  const std::vector<std::size_t>& classes(Split split) const {
    return split == Split::base ? base_class_ids : new_class_ids;
  }
  /// Stable identifier of the generation arguments.
  std::uint64_t hash() const;
};

/// Builds a task encoder-first: class tokens, hand-crafted embeddings
/// through `encoder`, perturbed image prototypes, then noisy unit features.
/// Throws ConfigError on invalid sizes or an encoder of the wrong width.
FewShotTask gen_synthetic_task(const TaskSpec& spec, const SyntheticTextEncoder& encoder);

/// Regenerates the frozen encoder recorded in the task.
SyntheticTextEncoder encoder_for(const FewShotTask& task);

EmbeddingStore task_to_store(const FewShotTask& task);
FewShotTask task_from_store(const EmbeddingStore& store);
void save_task(const FewShotTask& task, const std::filesystem::path& path);
FewShotTask load_task(const std::filesystem::path& path);

/// FNV-1a of the compact JSON dump.
std::uint64_t json_hash(const nlohmann::json& j);

}  // namespace ptlab
