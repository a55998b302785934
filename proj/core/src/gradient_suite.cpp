#include "ptlab/gradient_suite.hpp"

#include <algorithm>
#include <string>

#include "ptlab/augmentation.hpp"
#include "ptlab/encoder.hpp"
#include "ptlab/errors.hpp"
#include "ptlab/objectives.hpp"
#include "ptlab/prompt.hpp"
#include "ptlab/rng.hpp"
#include "ptlab/task.hpp"

namespace ptlab {
namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_index(hi - lo + 1); }

}  // namespace

double GradientSuiteResult::max_error() const { return std::max({ce, kl, kg, total}); }

bool GradientSuiteResult::passed() const {
  return ce < kSingleLossTolerance && kl < kSingleLossTolerance && kg < kSingleLossTolerance &&
         total < kTotalLossTolerance;
}

GradientSuiteResult run_gradient_suite(std::uint64_t seed, std::size_t trials) {
  if (trials < 1) throw ConfigError("trials must be positive");
  GradientSuiteResult result;
  result.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(Rng::derive(seed, "gradient-suite-" + std::to_string(t)));
    TaskSpec spec;
    spec.num_classes = pick(rng, 2, 5);
    spec.dim = pick(rng, 2, 16);
    spec.context_length = pick(rng, 1, 4);
    spec.shots = 2;
    spec.test_per_class = 2;
    spec.seed = rng.next_u64();
    const std::size_t batch = pick(rng, 2, 8);
    const double tau = rng.uniform(0.05, 0.5);
    const std::size_t mi_hidden = pick(rng, 2, 16);

    const SyntheticTextEncoder encoder(rng.next_u64(), spec.dim, pick(rng, 2, 12));
    const FewShotTask task = gen_synthetic_task(spec, encoder);
    // Every class is active; samples come from the test pool, which covers them all.
    std::vector<std::size_t> classes(spec.num_classes);
    for (std::size_t c = 0; c < classes.size(); ++c) classes[c] = c;
    Rng batch_rng(rng.next_u64());
    const TrainingBatch batch_data = [&] {
      try {
        return build_training_batch(task.test, classes, batch, batch / 2, batch_rng);
      } catch (const PairingError&) {
        return build_training_batch(task.test, classes, batch, 0, batch_rng);
      }
    }();
    const PromptContext ctx = init_context(spec.context_length, spec.dim, 0.5, rng.next_u64());
    const MIEstimator est = MIEstimator::init(classes.size(), mi_hidden, rng.next_u64());
    // Generic (nonzero) biases so every estimator path is exercised.
    std::vector<double> b1(mi_hidden), b2(classes.size());
    for (auto& v : b1) v = 0.1 * rng.normal();
    for (auto& v : b2) v = 0.1 * rng.normal();

    auto logits_of = [&](const Tensor& context) {
      const auto views = encode_views(PromptContext{context}, task, encoder, tau, classes);
      return std::pair{views, similarity_logits(views.learnable, batch_data.features, tau)};
    };
    const Tensor p_zs = zero_shot_probs(select_rows(task.handcrafted, classes), batch_data.features, tau);

    const Objective ce = [&](std::span<const Tensor> p) {
      const auto [views, logits] = logits_of(p[0]);
      return cross_entropy(softmax(logits), batch_data.labels);
    };
    const Objective kl = [&](std::span<const Tensor> p) {
      const auto [views, logits] = logits_of(p[0]);
      return kl_general_loss(p_zs, softmax(logits));
    };
    const Objective kg = [&](std::span<const Tensor> p) {
      const auto [views, logits] = logits_of(p[0]);
      return kg_euclidean_loss(views.handcrafted, views.learnable);
    };
    const Objective total = [&](std::span<const Tensor> p) {
      const auto [views, logits] = logits_of(p[0]);
      const MIEstimator e{p[1], p[2], p[3], p[4]};
      const Tensor hand = similarity_logits(views.handcrafted, batch_data.features, tau);
      return total_loss(cross_entropy(softmax(logits), batch_data.labels), joint_probability(e, hand, logits),
                        LossWeights{});
    };

    const std::vector<Tensor> context_only{ctx.vectors};
    const std::vector<Tensor> all{ctx.vectors, est.w1, Tensor::parameter({mi_hidden}, b1), est.w2,
                                  Tensor::parameter({classes.size()}, b2)};
    result.ce = std::max(result.ce, finite_difference_check(ce, context_only, kSuiteEps));
    result.kl = std::max(result.kl, finite_difference_check(kl, context_only, kSuiteEps));
    result.kg = std::max(result.kg, finite_difference_check(kg, context_only, kSuiteEps));
    result.total = std::max(result.total, finite_difference_check(total, all, kSuiteEps));
  }
  return result;
}

}  // namespace ptlab
