#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "ptlab/tensor.hpp"

namespace ptlab {

/// Frozen, seeded stand-in for a pretrained text encoder:
///
///   encode(tokens) = l2_normalize(W2 tanh(W1 meanpool(tokens) + b1) + b2)
///
/// Weights are a pure function of (seed, dim, hidden).
class SyntheticTextEncoder {
 public:
  SyntheticTextEncoder(std::uint64_t seed, std::size_t dim, std::size_t hidden);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t hidden() const noexcept { return hidden_; }

  const Tensor& w1() const noexcept { return w1_; }  // hidden x dim
  const Tensor& b1() const noexcept { return b1_; }  // hidden
  const Tensor& w2() const noexcept { return w2_; }  // dim x hidden
  const Tensor& b2() const noexcept { return b2_; }  // dim

  /// `tokens` is a T x dim matrix, one token per row. Differentiable with
  /// respect to the tokens; returns a 1 x dim unit row.
  Tensor encode(const Tensor& tokens) const;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  std::size_t hidden_;
  Tensor w1_, b1_, w2_, b2_;
  Tensor w1_t_, w2_t_;
};

/// Free-function form of SyntheticTextEncoder::encode. Throws DomainError on
/// an empty token sequence and ShapeError on a width mismatch.
Tensor synth_text_encode(const SyntheticTextEncoder& encoder, const Tensor& tokens);
/// Same, with the tokens given as separate 1 x dim rows.
Tensor synth_text_encode(const SyntheticTextEncoder& encoder, std::span<const Tensor> tokens);

}  // namespace ptlab
