#pragma once

#include <filesystem>

#include "ptlab/embedding_store.hpp"
#include "ptlab/trainer.hpp"

namespace ptlab {

/// PTES layout: "context_vectors" (M x d) and, for models with an
/// estimator, "mi_w1", "mi_b1", "mi_w2", "mi_b2"; meta carries the config,
/// hashes, step count and history.
EmbeddingStore checkpoint_to_store(const TrainedModel& model);
TrainedModel checkpoint_from_store(const EmbeddingStore& store);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
/// Throws FormatError on malformed files.
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace ptlab
