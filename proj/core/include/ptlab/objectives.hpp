#pragma once

// Losses for prompt tuning. Batched functions take one sample per row and
// average per-sample losses over rows.

#include <cstddef>
#include <cstdint>
#include <span>

#include "ptlab/tensor.hpp"

namespace ptlab {

/// Floor applied to probabilities inside logarithms.
inline constexpr double kProbFloor = 1e-12;

/// N x C logits <row_j, feature_n> / tau. `features` is N x d (or a single
/// d-vector), `embeddings` is C x d. Throws ConfigError when tau <= 0.
Tensor similarity_logits(const Tensor& embeddings, const Tensor& features, double tau);

/// Softmax over the hand-crafted rows.
Tensor zero_shot_probs(const Tensor& handcrafted, const Tensor& features, double tau);
/// Softmax over the learnable rows. Same kernel as zero_shot_probs.
Tensor prediction_probs(const Tensor& learnable, const Tensor& features, double tau);

/// mean_n -sum_i label_ni log probs_ni. Throws DomainError when a probability
/// is nonpositive where its label is positive.
Tensor cross_entropy(const Tensor& probs, const Tensor& labels);
/// Same objective from logits through log-softmax.
Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& labels);

/// mean_n KL(p_zs || p_pred); zero entries of p_zs contribute nothing.
Tensor kl_general_loss(const Tensor& p_zs, const Tensor& p_pred);
/// Same objective, with p_pred given by its logits.
Tensor kl_general_loss_with_logits(const Tensor& p_zs, const Tensor& pred_logits);

/// Fraction of rows whose first maximal logit sits at `targets[row]`.
double argmax_accuracy(const Tensor& logits, std::span<const std::size_t> targets);

/// (1/C) sum_j ||handcrafted_j - learnable_j||^2.
Tensor kg_euclidean_loss(const Tensor& handcrafted, const Tensor& learnable);

/// Two-layer ReLU network mapping a C-vector view to C logits:
/// W2 relu(W1 x + b1) + b2.
struct MIEstimator {
  Tensor w1;  // hidden x C
  Tensor b1;  // hidden
  Tensor w2;  // C x hidden
  Tensor b2;  // C

  std::size_t classes() const { return w1.cols(); }
  std::size_t hidden() const { return w1.rows(); }

  /// He-scaled Gaussian weights, zero biases, all parameter leaves.
  static MIEstimator init(std::size_t classes, std::size_t hidden, std::uint64_t seed);
  static MIEstimator from_values(std::size_t classes, std::size_t hidden, std::vector<double> w1,
                                 std::vector<double> b1, std::vector<double> w2, std::vector<double> b2);
};

/// Logits for every row of `views` (N x C). Throws ShapeError on a width
/// mismatch.
Tensor mi_estimator_forward(const MIEstimator& est, const Tensor& views);

/// Symmetrized joint distribution of two categorical variables with its
/// marginals (1 x C each).
struct JointProbabilityMatrix {
  Tensor p;
  Tensor row_marginal;
  Tensor col_marginal;

  std::size_t classes() const { return p.rows(); }
};

/// P = (1/n) sum_i softmax(phi(x1_i)) softmax(phi(x2_i))^T, then
/// P <- (P + P^T) / 2. Views are n x C. Throws DomainError on an empty batch.
JointProbabilityMatrix joint_probability(const MIEstimator& est, const Tensor& views1, const Tensor& views2);

/// Wraps an explicit C x C matrix, checking that entries are nonnegative and
/// sum to 1 within 1e-8 (DomainError otherwise).
JointProbabilityMatrix joint_from_matrix(const Tensor& p);

/// -sum p log p with 0 log 0 = 0, over all entries. Throws DomainError for a
/// negative entry or a total mass off 1 by more than 1e-6.
Tensor entropy(const Tensor& dist);
Tensor joint_entropy(const JointProbabilityMatrix& joint);

/// KL(p || q) over all entries, 0 log 0 = 0.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

/// (H(m1) + H(m2) + H(P)) / 3.
Tensor mi_objective(const JointProbabilityMatrix& joint);

/// KL(d || m1) + KL(d || m2) with d = diag(P) / trace(P). Throws DomainError
/// when the trace is not positive.
Tensor distance_constraint(const JointProbabilityMatrix& joint);

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 2.0;

  /// Throws ConfigError for negative or non-finite weights.
  void validate() const;
};

/// ce - lambda1 * mi_objective(P) + lambda2 * distance_constraint(P).
Tensor total_loss(const Tensor& ce, const JointProbabilityMatrix& joint, const LossWeights& weights);

}  // namespace ptlab
