// One line per acceptance criterion; exits nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "ptlab/augmentation.hpp"
#include "ptlab/checkpoint.hpp"
#include "ptlab/config.hpp"
#include "ptlab/embedding_store.hpp"
#include "ptlab/errors.hpp"
#include "ptlab/evaluation.hpp"
#include "ptlab/gradient_suite.hpp"
#include "ptlab/objectives.hpp"
#include "ptlab/report.hpp"
#include "ptlab/trainer.hpp"
#include "support.hpp"

using namespace ptlab;
using namespace ptlab::testing;

namespace {

// First verified run of the ablation on the regression config, as fractions.
struct FrozenRow {
  const char* method;
  double base, novel, hm;
};
constexpr FrozenRow kFrozenAblation[] = {
    {"coop", 587.0 / 750, 327.0 / 750, 0.5600262582056893},
    {"ours_mi", 587.0 / 750, 327.0 / 750, 0.5600262582056893},
    {"ours_mi_aug", 569.0 / 750, 349.0 / 750, 0.57685112563543928},
};
constexpr double kFrozenTolerance = 1e-9;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome hm_fidelity() {
  Outcome o;
  const double a = harmonic_mean(72.06, 59.69);
  const double b = harmonic_mean(72.42, 68.00);
  o.require(std::abs(a - 65.29) <= 0.005, fmt("HM(72.06, 59.69) = %.4f", a));
  o.require(std::abs(b - 70.14) <= 0.005, fmt("HM(72.42, 68.00) = %.4f", b));
  if (o.pass) o.detail = fmt("%.3f, %.3f", a, b);
  return o;
}

Outcome gradient_suite() {
  Outcome o;
  const auto r = run_gradient_suite(1, 100);
  o.require(r.trials >= 100, "fewer than 100 trials");
  o.require(std::max({r.ce, r.kl, r.kg}) <= kSingleLossTolerance, fmt("single-loss error %.3e", std::max({r.ce, r.kl, r.kg})));
  o.require(r.total <= kTotalLossTolerance, fmt("total-loss error %.3e", r.total));
  if (o.pass) o.detail = fmt("%.0f trials, max error %.2e", static_cast<double>(r.trials), r.max_error());
  return o;
}

Outcome mi_oracles() {
  Outcome o;
  for (std::size_t c = 2; c <= 10; ++c) {
    std::vector<double> diag(c * c, 0.0), uniform(c * c, 1.0 / static_cast<double>(c * c));
    for (std::size_t i = 0; i < c; ++i) diag[i * c + i] = 1.0 / static_cast<double>(c);
    const auto jd = joint_from_matrix(Tensor::constant({c, c}, diag));
    const auto ju = joint_from_matrix(Tensor::constant({c, c}, uniform));
    const double lnc = std::log(static_cast<double>(c));
    o.require(std::abs(mi_objective(jd).item() - lnc) <= 1e-10, fmt("MI(I/C) at C=%.0f", static_cast<double>(c)));
    o.require(std::abs(distance_constraint(jd).item()) <= 1e-10, fmt("dc(I/C) at C=%.0f", static_cast<double>(c)));
    o.require(std::abs(mi_objective(ju).item() - 4.0 / 3.0 * lnc) <= 1e-10,
              fmt("MI(uniform) at C=%.0f", static_cast<double>(c)));
  }
  Rng rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t c = 2 + rng.uniform_index(9);
    const auto p = random_simplex(rng, c);
    const auto q = random_simplex(rng, c);
    const auto pj = random_simplex(rng, c * c);
    const Tensor tp = Tensor::constant({1, c}, p);
    worst = std::max(worst, std::abs(entropy(tp).item() - brute_entropy(p)));
    worst = std::max(worst, std::abs(kl_divergence(tp, Tensor::constant({1, c}, q)).item() - brute_kl(p, q)));
    worst = std::max(worst, std::abs(joint_entropy(joint_from_matrix(Tensor::constant({c, c}, pj))).item() -
                                     brute_entropy(pj)));
  }
  o.require(worst <= 1e-12, fmt("brute-force mismatch %.3e", worst));
  if (o.pass) o.detail = fmt("C=2..10, 1000 inputs, max deviation %.1e", worst);
  return o;
}

Outcome joint_invariants() {
  Outcome o;
  Rng rng(99);
  double worst_sum = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t c = 2 + rng.uniform_index(9);
    const std::size_t n = 1 + rng.uniform_index(16);
    const auto est = MIEstimator::init(c, 2 + rng.uniform_index(15), rng.next_u64());
    const Tensor v1 = Tensor::constant({n, c}, random_values(rng, n * c, 5.0));
    const Tensor v2 = Tensor::constant({n, c}, random_values(rng, n * c, 5.0));
    const auto j = joint_probability(est, v1, v2);
    double total = 0.0, rows = 0.0, cols = 0.0;
    for (std::size_t a = 0; a < c; ++a) {
      rows += j.row_marginal.values()[a];
      cols += j.col_marginal.values()[a];
      for (std::size_t b = 0; b < c; ++b) {
        o.require(j.p.at(a, b) == j.p.at(b, a), "P not symmetric");
        o.require(j.p.at(a, b) >= 0.0, "negative entry");
        total += j.p.at(a, b);
      }
    }
    worst_sum = std::max({worst_sum, std::abs(total - 1.0), std::abs(rows - 1.0), std::abs(cols - 1.0)});
  }
  o.require(worst_sum <= 1e-8, fmt("sum deviation %.3e", worst_sum));
  if (o.pass) o.detail = fmt("1000 batches, max sum deviation %.1e", worst_sum);
  return o;
}

Outcome reduction_identities() {
  Outcome o;
  const RunConfig cfg = regression_config();
  const auto p = prepare_task(cfg, 4, 1);
  auto ours = cfg.train_config(Method::ours, 1);
  ours.lambda1 = 0.0;
  ours.lambda2 = 0.0;
  ours.mix_count = 0;
  ours.epochs = 20;
  auto coop = cfg.train_config(Method::coop, 1);
  coop.epochs = 20;
  const auto a = train(ours, p.task, p.encoder);
  const auto b = train(coop, p.task, p.encoder);
  bool same = a.history.size() == b.history.size();
  for (std::size_t e = 0; same && e < a.history.size(); ++e) same = a.history[e].mean_loss == b.history[e].mean_loss;
  o.require(same && a.context.vectors.to_vector() == b.context.vectors.to_vector(), "ours(0, 0, B_mix=0) != CoOp");

  const PromptContext ctx{Tensor::parameter(p.task.template_tokens.shape(), p.task.template_tokens.to_vector())};
  const auto views = encode_views(ctx, p.task, p.encoder, cfg.train.tau, p.task.base_class_ids);
  o.require(kg_euclidean_loss(views.handcrafted, views.learnable).item() == 0.0, "L_kg nonzero at equality");

  Rng rng(5);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng.uniform_index(64);
    const auto gc = random_values(rng, n);
    const auto gg = random_values(rng, n);
    const auto r = prograd_project(gc, gg);
    double dot = 0.0, dot_in = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dot += r[i] * gg[i];
      dot_in += gc[i] * gg[i];
    }
    o.require(dot >= -1e-10, "projection opposes the general gradient");
    if (dot_in >= 0.0) o.require(r == gc, "aligned gradient was modified");
  }
  if (o.pass) o.detail = "CoOp trajectory bit-identical over 20 epochs";
  return o;
}

Outcome mixup_invariants() {
  Outcome o;
  Rng rng(17);
  for (int t = 0; t < 10000; ++t) {
    const double l = sample_lambda(rng);
    o.require(l >= 0.4 && l <= 0.6, fmt("lambda %.6f out of range", l));
  }
  const RunConfig cfg = regression_config();
  const auto p = prepare_task(cfg, 4, 1);
  const auto& classes = p.task.base_class_ids;
  std::size_t mixed = 0;
  for (int t = 0; t < 1000; ++t) {
    TrainingBatch batch;
    try {
      batch = build_training_batch(p.task.train, classes, 4, 4, rng);
    } catch (const PairingError&) {
      continue;
    }
    for (std::size_t m = 0; m < batch.draws.size(); ++m, ++mixed) {
      const auto& d = batch.draws[m];
      const std::size_t r = 4 + m;
      o.require(p.task.train.labels[batch.source_rows[d.index_a]] != p.task.train.labels[batch.source_rows[d.index_b]],
                "mixed pair shares a class");
      double total = 0.0;
      for (std::size_t k = 0; k < classes.size(); ++k) {
        const double expected = d.lambda * batch.labels.at(d.index_a, k) + (1.0 - d.lambda) * batch.labels.at(d.index_b, k);
        o.require(batch.labels.at(r, k) == expected, "label is not the convex combination");
        total += batch.labels.at(r, k);
      }
      o.require(std::abs(total - 1.0) <= 1e-12, "mixed label does not sum to 1");
    }
  }
  RunConfig small = cfg;
  small.train.epochs = 10;
  const auto without = run_method(small, "ours_mi", p, 4, 1);
  small.train.mix_count = 0;
  const auto zero = run_method(small, "ours", p, 4, 1);
  o.require(without.base_acc == zero.base_acc && without.new_acc == zero.new_acc, "B_mix=0 differs from w/o Mixup");
  if (o.pass) o.detail = fmt("10000 lambdas, %.0f mixed rows", static_cast<double>(mixed));
  return o;
}

Outcome directional_regression() {
  Outcome o;
  const auto report = ablation_run(regression_config());
  const auto& coop = report.row("coop", 4);
  const auto& mi = report.row("ours_mi", 4);
  const auto& aug = report.row("ours_mi_aug", 4);
  for (const auto* r : {&coop, &mi, &aug})
    std::printf("       %-12s base %.4f  new %.4f  HM %.4f\n", r->method.c_str(), r->base_acc, r->new_acc, r->hm);
  o.require(aug.new_acc >= mi.new_acc, "new: +MI+Aug < +MI");
  o.require(mi.new_acc >= coop.new_acc, "new: +MI < CoOp");
  o.require(aug.hm > coop.hm, "HM: ours <= CoOp");
  for (const auto& f : kFrozenAblation) {
    const auto& r = report.row(f.method, 4);
    o.require(std::abs(r.base_acc - f.base) <= kFrozenTolerance && std::abs(r.new_acc - f.novel) <= kFrozenTolerance &&
                  std::abs(r.hm - f.hm) <= kFrozenTolerance,
              std::string("drift from frozen values: ") + f.method);
  }
  if (o.pass) o.detail = fmt("new %.2f >= %.2f >= %.2f", 100 * aug.new_acc, 100 * mi.new_acc, 100 * coop.new_acc);
  return o;
}

Outcome determinism_and_persistence() {
  Outcome o;
  RunConfig cfg = regression_config();
  cfg.train.epochs = 20;
  cfg.seeds = {1, 2};
  const auto a = base_new_protocol(cfg, cfg.methods, cfg.shots, cfg.seeds);
  const auto b = base_new_protocol(cfg, cfg.methods, cfg.shots, cfg.seeds);
  o.require(render_report(a, ReportFormat::markdown) == render_report(b, ReportFormat::markdown), "markdown differs");
  o.require(render_report(a, ReportFormat::csv) == render_report(b, ReportFormat::csv), "csv differs");

  const auto p = prepare_task(cfg, 4, 1);
  const auto dir = std::filesystem::temp_directory_path();
  for (Method m : {Method::ours, Method::coop, Method::kgcoop, Method::prograd}) {
    const auto model = train(cfg.train_config(m, 1), p.task, p.encoder);
    const auto path = dir / "ptlab_acceptance_ckpt.ptes";
    save_checkpoint(model, path);
    const auto loaded = load_checkpoint(path);
    std::filesystem::remove(path);
    for (Split s : {Split::base, Split::novel})
      o.require(evaluate_accuracy(loaded, p.task, s, p.encoder) == evaluate_accuracy(model, p.task, s, p.encoder),
                std::string("checkpoint eval differs for ") + std::string(to_string(m)));
    const auto bytes = encode_store(checkpoint_to_store(model));
    o.require(encode_store(decode_store(bytes)) == bytes, "checkpoint bytes not lossless");
  }
  const auto bytes = encode_store(task_to_store(p.task));
  o.require(encode_store(decode_store(bytes)) == bytes, "task bytes not lossless");
  const auto path = dir / "ptlab_acceptance_task.ptes";
  save_task(p.task, path);
  o.require(encode_store(task_to_store(load_task(path))) == bytes, "task file round trip not lossless");
  std::filesystem::remove(path);
  if (o.pass) o.detail = "reports, checkpoints and PTES bytes reproduced";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"harmonic-mean fidelity", hm_fidelity},
      {"gradient suite", gradient_suite},
      {"MI oracle suite", mi_oracles},
      {"joint-matrix invariants", joint_invariants},
      {"reduction identities", reduction_identities},
      {"mixup invariants", mixup_invariants},
      {"directional desk-scale regression", directional_regression},
      {"determinism and persistence", determinism_and_persistence},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %-36s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
