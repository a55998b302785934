#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ptlab/encoder.hpp"
#include "ptlab/task.hpp"
#include "ptlab/tensor.hpp"

namespace ptlab {

/// The M x d learnable context vectors shared by every class prompt.
struct PromptContext {
  Tensor vectors;

  std::size_t length() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }

  /// Fresh parameter leaf holding `values` (M x d, row-major).
  static PromptContext from_values(std::size_t length, std::size_t dim, std::vector<double> values);
};

/// Entries i.i.d. N(0, init_scale^2). Throws ConfigError on invalid sizes.
PromptContext init_context(std::size_t length, std::size_t dim, double init_scale, std::uint64_t seed);

/// The (M + 1) x d token matrix [v_1; ...; v_M; c_i]. Gradients reach the
/// context only; `class_token` is treated as a constant.
Tensor assemble_prompt(const PromptContext& ctx, const Tensor& class_token);

/// Hand-crafted and learnable class embeddings for a subset of classes.
struct ClassEmbeddingViews {
  Tensor handcrafted;  // C x d, constant
  Tensor learnable;    // C x d, differentiable w.r.t. the context
  double tau = 0.01;
  std::vector<std::size_t> class_ids;
};

/// Encodes the prompt of every class in `class_ids` with the current
/// context. Throws ShapeError when task, encoder and context widths differ
/// and ConfigError for a nonpositive temperature.
ClassEmbeddingViews encode_views(const PromptContext& ctx, const FewShotTask& task,
                                 const SyntheticTextEncoder& encoder, double tau,
                                 std::span<const std::size_t> class_ids);

/// Rows `ids` of `matrix`, without gradient history.
Tensor select_rows(const Tensor& matrix, std::span<const std::size_t> ids);

}  // namespace ptlab
