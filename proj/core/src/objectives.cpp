#include "ptlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ptlab/errors.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {
namespace {

Tensor as_rows(const Tensor& t, std::size_t width) {
  if (t.cols() != width) {
    throw ShapeError("expected rows of width " + std::to_string(width) + ", got " +
                     std::to_string(t.cols()));
  }
  return t.rank() == 2 ? t : reshape(t, {t.rows(), width});
}

void require_same_extent(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(op) + ": shape mismatch");
}

void require_support(const Tensor& weights, const Tensor& probs, const char* op) {
  auto w = weights.values();
  auto p = probs.values();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0 && !(p[i] > 0.0)) {
      throw DomainError(std::string(op) + ": nonpositive probability where the target is positive");
    }
  }
}

// sum p * log(max(p, floor)); zero entries of p contribute exactly zero.
Tensor plogp(const Tensor& p) { return sum(mul(p, log(clamp_min(p, kProbFloor)))); }

Tensor row_bias(const Tensor& bias, std::size_t rows) { return outer(Tensor::ones({rows}), bias); }

void check_distribution(const Tensor& dist, const char* op) {
  double total = 0.0;
  for (double v : dist.values()) {
    if (v < 0.0) throw DomainError(std::string(op) + ": negative probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError(std::string(op) + ": probabilities do not sum to 1");
}

Tensor gaussian_param(Rng& rng, Shape shape, double stddev) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<double> v(n);
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace

Tensor similarity_logits(const Tensor& embeddings, const Tensor& features, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("temperature must be positive");
  const Tensor f = as_rows(features, embeddings.cols());
  return scale(matmul(f, transpose(embeddings)), 1.0 / tau);
}

Tensor zero_shot_probs(const Tensor& handcrafted, const Tensor& features, double tau) {
  return softmax(similarity_logits(handcrafted, features, tau));
}

Tensor prediction_probs(const Tensor& learnable, const Tensor& features, double tau) {
  return softmax(similarity_logits(learnable, features, tau));
}

Tensor cross_entropy(const Tensor& probs, const Tensor& labels) {
  require_same_extent(probs, labels, "cross_entropy");
  require_support(labels, probs, "cross_entropy");
  const Tensor y = reshape(labels, probs.shape());
  const double n = static_cast<double>(probs.rows());
  return scale(sum(mul(y, log(clamp_min(probs, kProbFloor)))), -1.0 / n);
}

Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& labels) {
  require_same_extent(logits, labels, "cross_entropy");
  const Tensor y = reshape(labels, logits.shape());
  const double n = static_cast<double>(logits.rows());
  return scale(sum(mul(y, log_softmax(logits))), -1.0 / n);
}

Tensor kl_general_loss(const Tensor& p_zs, const Tensor& p_pred) {
  require_same_extent(p_zs, p_pred, "kl_general_loss");
  require_support(p_zs, p_pred, "kl_general_loss");
  const Tensor p = reshape(p_zs, p_pred.shape());
  const double n = static_cast<double>(p_pred.rows());
  const Tensor log_ratio = sub(log(clamp_min(p, kProbFloor)), log(clamp_min(p_pred, kProbFloor)));
  return scale(sum(mul(p, log_ratio)), 1.0 / n);
}

Tensor kl_general_loss_with_logits(const Tensor& p_zs, const Tensor& pred_logits) {
  require_same_extent(p_zs, pred_logits, "kl_general_loss");
  const Tensor p = reshape(p_zs, pred_logits.shape());
  const double n = static_cast<double>(pred_logits.rows());
  const Tensor log_ratio = sub(log(clamp_min(p, kProbFloor)), log_softmax(pred_logits));
  return scale(sum(mul(p, log_ratio)), 1.0 / n);
}

double argmax_accuracy(const Tensor& logits, std::span<const std::size_t> targets) {
  if (logits.rows() != targets.size()) throw ShapeError("argmax_accuracy: one target per row required");
  const std::size_t c = logits.cols();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    auto row = logits.values().subspan(r * c, c);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == targets[r] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

Tensor kg_euclidean_loss(const Tensor& handcrafted, const Tensor& learnable) {
  if (handcrafted.shape() != learnable.shape()) throw ShapeError("kg_euclidean_loss: shape mismatch");
  const Tensor diff = sub(handcrafted, learnable);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(handcrafted.rows()));
}

MIEstimator MIEstimator::init(std::size_t classes, std::size_t hidden, std::uint64_t seed) {
  if (classes < 1 || hidden < 1) throw ConfigError("estimator sizes must be positive");
  Rng rng(seed);
  MIEstimator est;
  est.w1 = gaussian_param(rng, {hidden, classes}, std::sqrt(2.0 / static_cast<double>(classes)));
  est.b1 = Tensor::parameter({hidden}, std::vector<double>(hidden, 0.0));
  est.w2 = gaussian_param(rng, {classes, hidden}, std::sqrt(2.0 / static_cast<double>(hidden)));
  est.b2 = Tensor::parameter({classes}, std::vector<double>(classes, 0.0));
  return est;
}

MIEstimator MIEstimator::from_values(std::size_t classes, std::size_t hidden, std::vector<double> w1,
                                     std::vector<double> b1, std::vector<double> w2,
                                     std::vector<double> b2) {
  MIEstimator est;
  est.w1 = Tensor::parameter({hidden, classes}, std::move(w1));
  est.b1 = Tensor::parameter({hidden}, std::move(b1));
  est.w2 = Tensor::parameter({classes, hidden}, std::move(w2));
  est.b2 = Tensor::parameter({classes}, std::move(b2));
  return est;
}

Tensor mi_estimator_forward(const MIEstimator& est, const Tensor& views) {
  const Tensor x = as_rows(views, est.classes());
  const std::size_t n = x.rows();
  const Tensor hidden = relu(add(matmul(x, transpose(est.w1)), row_bias(est.b1, n)));
  return add(matmul(hidden, transpose(est.w2)), row_bias(est.b2, n));
}

JointProbabilityMatrix joint_probability(const MIEstimator& est, const Tensor& views1, const Tensor& views2) {
  if (!views1.defined() || !views2.defined()) throw DomainError("joint_probability: empty batch");
  if (views1.rows() != views2.rows()) throw ShapeError("joint_probability: views differ in batch size");
  const std::size_t n = views1.rows();
  const Tensor s1 = softmax(mi_estimator_forward(est, views1));
  const Tensor s2 = softmax(mi_estimator_forward(est, views2));
  const Tensor p = scale(matmul(transpose(s1), s2), 1.0 / static_cast<double>(n));
  const Tensor sym = scale(add(p, transpose(p)), 0.5);
  const std::size_t c = est.classes();
  return JointProbabilityMatrix{sym, reshape(matmul(sym, Tensor::ones({c, 1})), {1, c}),
                                matmul(Tensor::ones({1, c}), sym)};
}

JointProbabilityMatrix joint_from_matrix(const Tensor& p) {
  if (p.rank() != 2 || p.rows() != p.cols()) throw ShapeError("joint matrix must be square");
  double total = 0.0;
  for (double v : p.values()) {
    if (v < 0.0) throw DomainError("joint matrix has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-8) throw DomainError("joint matrix does not sum to 1");
  const std::size_t c = p.rows();
  return JointProbabilityMatrix{p, reshape(matmul(p, Tensor::ones({c, 1})), {1, c}),
                                matmul(Tensor::ones({1, c}), p)};
}

Tensor entropy(const Tensor& dist) {
  check_distribution(dist, "entropy");
  return scale(plogp(dist), -1.0);
}

Tensor joint_entropy(const JointProbabilityMatrix& joint) { return entropy(joint.p); }

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.numel() != q.numel()) throw ShapeError("kl_divergence: size mismatch");
  const Tensor qq = reshape(q, p.shape());
  return sum(mul(p, sub(log(clamp_min(p, kProbFloor)), log(clamp_min(qq, kProbFloor)))));
}

Tensor mi_objective(const JointProbabilityMatrix& joint) {
  const Tensor h = add(add(entropy(joint.row_marginal), entropy(joint.col_marginal)), joint_entropy(joint));
  return scale(h, 1.0 / 3.0);
}

Tensor distance_constraint(const JointProbabilityMatrix& joint) {
  const std::size_t c = joint.classes();
  const Tensor diag = matmul(Tensor::ones({1, c}), mul(joint.p, Tensor::identity(c)));
  const Tensor trace = sum(diag);
  if (!(trace.item() > 0.0)) throw DomainError("distance_constraint: joint matrix has zero trace");
  const Tensor d = div(diag, reshape(outer(trace, Tensor::ones({c})), {1, c}));
  return add(kl_divergence(d, joint.row_marginal), kl_divergence(d, joint.col_marginal));
}

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1) || !(lambda2 >= 0.0) || !std::isfinite(lambda2)) {
    throw ConfigError("loss weights must be finite and nonnegative");
  }
}

Tensor total_loss(const Tensor& ce, const JointProbabilityMatrix& joint, const LossWeights& weights) {
  weights.validate();
  return add(add(ce, scale(mi_objective(joint), -weights.lambda1)),
             scale(distance_constraint(joint), weights.lambda2));
}

}  // namespace ptlab
