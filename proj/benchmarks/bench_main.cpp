#include <benchmark/benchmark.h>

#include <vector>

#include "ptlab/augmentation.hpp"
#include "ptlab/config.hpp"
#include "ptlab/errors.hpp"
#include "ptlab/evaluation.hpp"
#include "ptlab/objectives.hpp"
#include "ptlab/prompt.hpp"
#include "ptlab/rng.hpp"
#include "ptlab/tensor.hpp"
#include "ptlab/trainer.hpp"

using namespace ptlab;

namespace {

std::vector<double> normals(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

RunConfig bench_config() {
  RunConfig c;
  c.num_classes = 10;
  c.dim = 32;
  c.shots = {4};
  return c;
}

void BM_MatmulSoftmaxBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = Tensor::parameter({n, n}, normals(rng, n * n));
  const Tensor b = Tensor::constant({n, n}, normals(rng, n * n));
  for (auto _ : state) {
    const Tensor loss = sum(log_softmax(matmul(a, b)));
    auto grads = backward(loss);
    benchmark::DoNotOptimize(grads.size());
  }
}
BENCHMARK(BM_MatmulSoftmaxBackward)->Arg(8)->Arg(32)->Arg(64);

void BM_JointProbability(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto est = MIEstimator::init(c, 256, 3);
  const Tensor v1 = Tensor::constant({8, c}, normals(rng, 8 * c));
  const Tensor v2 = Tensor::constant({8, c}, normals(rng, 8 * c));
  for (auto _ : state) {
    const auto j = joint_probability(est, v1, v2);
    const Tensor loss = add(scale(mi_objective(j), -1.0), scale(distance_constraint(j), 2.0));
    benchmark::DoNotOptimize(backward(loss).size());
  }
}
BENCHMARK(BM_JointProbability)->Arg(5)->Arg(10);

void BM_BuildBatch(benchmark::State& state) {
  const RunConfig cfg = bench_config();
  const auto p = prepare_task(cfg, 4, 1);
  Rng rng(4);
  for (auto _ : state) {
    try {
      auto batch = build_training_batch(p.task.train, p.task.base_class_ids, 4, 4, rng);
      benchmark::DoNotOptimize(batch.size());
    } catch (const PairingError&) {
      // single-class draw; the trainer redraws these
    }
  }
}
BENCHMARK(BM_BuildBatch);

void BM_TrainEpoch(benchmark::State& state) {
  const RunConfig cfg = bench_config();
  const auto p = prepare_task(cfg, 4, 1);
  const Method method = static_cast<Method>(state.range(0));
  auto tc = cfg.train_config(method, 1);
  tc.epochs = 1;
  for (auto _ : state) {
    auto model = train(tc, p.task, p.encoder);
    benchmark::DoNotOptimize(model.steps);
  }
  state.SetLabel(std::string(to_string(method)));
}
BENCHMARK(BM_TrainEpoch)
    ->Arg(static_cast<int>(Method::ours))
    ->Arg(static_cast<int>(Method::coop))
    ->Arg(static_cast<int>(Method::kgcoop))
    ->Arg(static_cast<int>(Method::prograd))
    ->Unit(benchmark::kMillisecond);

void BM_EvaluateBothSplits(benchmark::State& state) {
  const RunConfig cfg = bench_config();
  const auto p = prepare_task(cfg, 4, 1);
  TrainedModel model;
  model.config = cfg.train_config(Method::coop, 1);
  model.context = init_context(model.config.context_length, cfg.dim, model.config.init_scale, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_accuracy(model, p.task, Split::base, p.encoder) +
                             evaluate_accuracy(model, p.task, Split::novel, p.encoder));
  }
}
BENCHMARK(BM_EvaluateBothSplits);

}  // namespace

BENCHMARK_MAIN();
