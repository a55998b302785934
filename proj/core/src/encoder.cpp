#include "ptlab/encoder.hpp"

#include <cmath>
#include <string>

#include "ptlab/errors.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {
namespace {

// Scales of the frozen weights. The input layer is wide enough that the
// class token moves the hidden units out of the linear regime of tanh.
constexpr double kInputGain = 2.0;
constexpr double kBiasScale = 0.1;

Tensor gaussian(Rng& rng, Shape shape, double stddev) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<double> v(n);
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::constant(std::move(shape), std::move(v));
}

}  // namespace

SyntheticTextEncoder::SyntheticTextEncoder(std::uint64_t seed, std::size_t dim, std::size_t hidden)
    : seed_(seed), dim_(dim), hidden_(hidden) {
  if (dim == 0 || hidden == 0) throw ConfigError("encoder dim and hidden width must be positive");
  Rng rng(Rng::derive(seed, "text-encoder"));
  w1_ = gaussian(rng, {hidden, dim}, kInputGain / std::sqrt(static_cast<double>(dim)));
  b1_ = gaussian(rng, {hidden}, kBiasScale);
  w2_ = gaussian(rng, {dim, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)));
  b2_ = gaussian(rng, {dim}, kBiasScale);
  w1_t_ = transpose(w1_);
  w2_t_ = transpose(w2_);
}

Tensor SyntheticTextEncoder::encode(const Tensor& tokens) const {
  if (!tokens.defined()) throw DomainError("encode: empty token sequence");
  if (tokens.cols() != dim_) {
    throw ShapeError("encode: token width " + std::to_string(tokens.cols()) + " != encoder dim " +
                     std::to_string(dim_));
  }
  const std::size_t count = tokens.rows();
  const Tensor pool = Tensor::constant({1, count}, std::vector<double>(count, 1.0 / count));
  const Tensor pooled = matmul(pool, reshape(tokens, {count, dim_}));
  const Tensor hidden = tanh(add(matmul(pooled, w1_t_), reshape(b1_, {1, hidden_})));
  const Tensor out = add(matmul(hidden, w2_t_), reshape(b2_, {1, dim_}));
  return l2_normalize_rows(out);
}

Tensor synth_text_encode(const SyntheticTextEncoder& encoder, const Tensor& tokens) {
  return encoder.encode(tokens);
}

Tensor synth_text_encode(const SyntheticTextEncoder& encoder, std::span<const Tensor> tokens) {
  if (tokens.empty()) throw DomainError("encode: empty token sequence");
  return encoder.encode(concat_rows(tokens));
}

}  // namespace ptlab
