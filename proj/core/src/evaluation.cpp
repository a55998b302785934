#include "ptlab/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "ptlab/augmentation.hpp"
#include "ptlab/errors.hpp"
#include "ptlab/objectives.hpp"
#include "ptlab/prompt.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

namespace {

const std::vector<std::size_t>& split_classes(const FewShotTask& task, Split split) {
  const auto& classes = task.classes(split);
  if (classes.empty()) throw ConfigError("split '" + std::string(to_string(split)) + "' has no classes");
  return classes;
}

}  // namespace

double split_accuracy(const Tensor& rows, const FewShotTask& task, Split split, double tau) {
  const auto& classes = split_classes(task, split);
  if (rows.rows() != classes.size()) throw ShapeError("one embedding row per split class required");
  const std::size_t d = task.dim();
  std::vector<double> feats;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < task.test.size(); ++i) {
    auto it = std::find(classes.begin(), classes.end(), task.test.labels[i]);
    if (it == classes.end()) continue;
    auto f = task.test.features.values().subspan(i * d, d);
    feats.insert(feats.end(), f.begin(), f.end());
    targets.push_back(static_cast<std::size_t>(it - classes.begin()));
  }
  if (targets.empty()) throw ConfigError("split '" + std::string(to_string(split)) + "' has no test samples");
  const Tensor features = Tensor::constant({targets.size(), d}, std::move(feats));
  return argmax_accuracy(similarity_logits(rows, features, tau), targets);
}

double evaluate_accuracy(const TrainedModel& model, const FewShotTask& task, Split split,
                         const SyntheticTextEncoder& encoder) {
  const PromptContext ctx{model.context.vectors.detach()};
  const auto views = encode_views(ctx, task, encoder, model.config.tau, split_classes(task, split));
  return split_accuracy(views.learnable, task, split, model.config.tau);
}

double evaluate_zero_shot(const FewShotTask& task, Split split, double tau) {
  return split_accuracy(select_rows(task.handcrafted, split_classes(task, split)), task, split, tau);
}

double harmonic_mean(double a_base, double a_new) {
  auto in_range = [](double x) { return std::isfinite(x) && x >= 0.0 && x <= 100.0; };
  if (!in_range(a_base) || !in_range(a_new)) throw DomainError("accuracies must lie in [0, 100]");
  if (a_base + a_new == 0.0) return 0.0;
  return 2.0 * a_base * a_new / (a_base + a_new);
}

// ---------------------------------------------------------------------------

std::vector<std::string> EvalReport::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (out.empty() || out.back() != r.method) out.push_back(r.method);
  return out;
}

std::vector<std::size_t> EvalReport::shots() const {
  std::set<std::size_t> s;
  for (const auto& r : runs) s.insert(r.shots);
  return {s.begin(), s.end()};
}

std::vector<std::uint64_t> EvalReport::seeds() const {
  std::set<std::uint64_t> s;
  for (const auto& r : runs) s.insert(r.seed);
  return {s.begin(), s.end()};
}

void EvalReport::finalize() {
  std::sort(runs.begin(), runs.end(), [](const RunResult& a, const RunResult& b) {
    return std::tie(a.method, a.shots, a.seed) < std::tie(b.method, b.shots, b.seed);
  });
  rows.clear();
  for (std::size_t i = 0; i < runs.size();) {
    std::size_t j = i;
    AggregateRow row{runs[i].method, runs[i].shots, 0.0, 0.0, 0.0, 0.0};
    while (j < runs.size() && runs[j].method == row.method && runs[j].shots == row.shots) {
      row.base_acc += runs[j].base_acc;
      row.new_acc += runs[j].new_acc;
      row.mean_seed_hm += runs[j].hm;
      ++j;
    }
    const auto n = static_cast<double>(j - i);
    row.base_acc /= n;
    row.new_acc /= n;
    row.mean_seed_hm /= n;
    row.hm = (std::isnan(row.base_acc) || std::isnan(row.new_acc)) ? std::nan("")
                                                                    : harmonic_mean(row.base_acc, row.new_acc);
    rows.push_back(row);
    i = j;
  }
}

const AggregateRow& EvalReport::row(std::string_view method, std::size_t shots) const {
  for (const auto& r : rows)
    if (r.method == method && r.shots == shots) return r;
  throw ConfigError("report has no row for " + std::string(method) + " at K=" + std::to_string(shots));
}

PreparedTask prepare_task(const RunConfig& config, std::size_t shots, std::uint64_t seed) {
  SyntheticTextEncoder encoder(Rng::derive(seed, "encoder"), config.dim, config.hidden);
  FewShotTask task = gen_synthetic_task(config.task_spec(config.max_shots(), seed), encoder);
  task.train = few_shot_sample(task.train, task.base_class_ids, shots,
                               Rng::derive(seed, "few-shot-" + std::to_string(shots)));
  return PreparedTask{std::move(task), std::move(encoder)};
}

RunResult run_method(const RunConfig& config, std::string_view method, const PreparedTask& prepared,
                     std::size_t shots, std::uint64_t seed) {
  RunResult r{std::string(method), shots, seed, 0.0, 0.0, 0.0};
  if (method == "zeroshot") {
    r.base_acc = evaluate_zero_shot(prepared.task, Split::base, config.train.tau);
    r.new_acc = evaluate_zero_shot(prepared.task, Split::novel, config.train.tau);
  } else {
    TrainConfig tc;
    if (method == "ours_mi") {
      tc = config.train_config(Method::ours, seed);
      tc.mix_count = 0;
    } else if (method == "ours_mi_aug") {
      tc = config.train_config(Method::ours, seed);
      if (tc.mix_count.value_or(tc.batch) == 0) tc.mix_count.reset();
    } else {
      tc = config.train_config(parse_method(method), seed);
    }
    const auto model = train(tc, prepared.task, prepared.encoder);
    r.base_acc = evaluate_accuracy(model, prepared.task, Split::base, prepared.encoder);
    r.new_acc = evaluate_accuracy(model, prepared.task, Split::novel, prepared.encoder);
  }
  r.hm = harmonic_mean(r.base_acc, r.new_acc);
  return r;
}

namespace {

EvalReport run_grid(const RunConfig& config, std::string title, std::span<const std::string> methods,
                    std::span<const std::size_t> shots, std::span<const std::uint64_t> seeds) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.title = std::move(title);
  report.config = config.to_json();
  for (auto seed : seeds) {
    for (auto k : shots) {
      const auto prepared = prepare_task(config, k, seed);
      for (const auto& m : methods) report.runs.push_back(run_method(config, m, prepared, k, seed));
    }
  }
  report.finalize();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

EvalReport base_new_protocol(const RunConfig& config, std::span<const std::string> methods,
                             std::span<const std::size_t> shots, std::span<const std::uint64_t> seeds) {
  config.validate();
  return run_grid(config, "Base-to-new generalization", methods, shots, seeds);
}

EvalReport ablation_run(const RunConfig& config) {
  config.validate();
  const std::vector<std::string> variants{"coop", "ours_mi", "ours_mi_aug"};
  return run_grid(config, "Ablation", variants, config.shots, config.seeds);
}

}  // namespace ptlab
