#include "ptlab/prompt.hpp"

#include <cmath>
#include <string>

#include "ptlab/errors.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

PromptContext PromptContext::from_values(std::size_t length, std::size_t dim, std::vector<double> values) {
  return PromptContext{Tensor::parameter({length, dim}, std::move(values))};
}

PromptContext init_context(std::size_t length, std::size_t dim, double init_scale, std::uint64_t seed) {
  if (length < 1 || dim < 1) throw ConfigError("context length and dim must be positive");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) throw ConfigError("init_scale must be positive");
  Rng rng(seed);
  std::vector<double> v(length * dim);
  for (auto& x : v) x = init_scale * rng.normal();
  return PromptContext::from_values(length, dim, std::move(v));
}

Tensor assemble_prompt(const PromptContext& ctx, const Tensor& class_token) {
  if (class_token.numel() != ctx.dim()) {
    throw ShapeError("class token has " + std::to_string(class_token.numel()) +
                     " entries, context dim is " + std::to_string(ctx.dim()));
  }
  const Tensor parts[] = {ctx.vectors, reshape(class_token.detach(), {1, ctx.dim()})};
  return concat_rows(parts);
}

Tensor select_rows(const Tensor& matrix, std::span<const std::size_t> ids) {
  const std::size_t c = matrix.cols();
  std::vector<double> out;
  out.reserve(ids.size() * c);
  for (auto id : ids) {
    if (id >= matrix.rows()) throw ShapeError("row index out of range");
    auto row = matrix.values().subspan(id * c, c);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::constant({ids.size(), c}, std::move(out));
}

ClassEmbeddingViews encode_views(const PromptContext& ctx, const FewShotTask& task,
                                 const SyntheticTextEncoder& encoder, double tau,
                                 std::span<const std::size_t> class_ids) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (ctx.dim() != task.dim() || encoder.dim() != task.dim()) {
    throw ShapeError("context, task and encoder dimensions disagree");
  }
  if (class_ids.empty()) throw ShapeError("encode_views: no classes requested");
  std::vector<Tensor> rows;
  rows.reserve(class_ids.size());
  for (auto id : class_ids) {
    if (id >= task.num_classes()) throw ShapeError("class id out of range");
    rows.push_back(encoder.encode(assemble_prompt(ctx, slice_rows(task.class_tokens, id, id + 1))));
  }
  ClassEmbeddingViews views;
  views.handcrafted = select_rows(task.handcrafted, class_ids);
  views.learnable = concat_rows(rows);
  views.tau = tau;
  views.class_ids.assign(class_ids.begin(), class_ids.end());
  return views;
}

}  // namespace ptlab
