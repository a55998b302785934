#include "ptlab/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ptlab/errors.hpp"

namespace ptlab {

double sample_lambda(Rng& rng) { return rng.uniform(kMixupLambdaMin, kMixupLambdaMax); }

MixedSample mixup_pair(std::span<const double> xa, std::span<const double> xb, std::span<const double> ya,
                       std::span<const double> yb, double lambda) {
  if (xa.size() != xb.size() || ya.size() != yb.size()) throw ShapeError("mixup_pair: size mismatch");
  if (!(lambda >= kMixupLambdaMin && lambda <= kMixupLambdaMax)) {
    throw DomainError("mixup lambda must lie in [0.4, 0.6]");
  }
  for (std::size_t i = 0; i < ya.size(); ++i) {
    if (ya[i] > 0.0 && yb[i] > 0.0) throw PairingError("mixup pair shares a class");
  }
  MixedSample out;
  out.raw.resize(xa.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    out.raw[i] = lambda * xa[i] + (1.0 - lambda) * xb[i];
    ss += out.raw[i] * out.raw[i];
  }
  const double norm = std::sqrt(ss);
  if (!(norm > 0.0)) throw DomainError("mixup produced a zero vector");
  out.feature.resize(xa.size());
  for (std::size_t i = 0; i < xa.size(); ++i) out.feature[i] = out.raw[i] / norm;
  out.label.resize(ya.size());
  for (std::size_t i = 0; i < ya.size(); ++i) out.label[i] = lambda * ya[i] + (1.0 - lambda) * yb[i];
  return out;
}

TrainingBatch build_training_batch(const LabeledSamples& train, std::span<const std::size_t> active_classes,
                                   std::size_t batch_size, std::size_t mix_count, Rng& rng) {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (train.size() == 0) throw ConfigError("training set is empty");
  const std::size_t n = train.size();
  const std::size_t d = train.features.cols();
  const std::size_t c = active_classes.size();
  auto position = [&](std::size_t cls) {
    auto it = std::find(active_classes.begin(), active_classes.end(), cls);
    if (it == active_classes.end()) throw ConfigError("training sample from an inactive class");
    return static_cast<std::size_t>(it - active_classes.begin());
  };

  TrainingBatch batch;
  if (batch_size <= n) {
    // Partial Fisher-Yates.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
      std::swap(pool[i], pool[j]);
      batch.source_rows.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < batch_size; ++i) batch.source_rows.push_back(rng.uniform_index(n));
  }

  std::vector<double> feats;
  std::vector<double> labels;
  feats.reserve((batch_size + mix_count) * d);
  labels.reserve((batch_size + mix_count) * c);
  std::vector<std::size_t> pos;
  for (auto row : batch.source_rows) {
    auto f = train.features.values().subspan(row * d, d);
    feats.insert(feats.end(), f.begin(), f.end());
    pos.push_back(position(train.labels[row]));
    std::vector<double> y(c, 0.0);
    y[pos.back()] = 1.0;
    labels.insert(labels.end(), y.begin(), y.end());
    batch.origin.push_back(SampleOrigin::original);
  }

  if (mix_count > 0) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < batch_size; ++i)
      for (std::size_t j = i + 1; j < batch_size; ++j)
        if (pos[i] != pos[j]) pairs.emplace_back(i, j);
    if (pairs.empty()) throw PairingError("batch covers fewer than two classes; cannot mix");
    for (std::size_t m = 0; m < mix_count; ++m) {
      const auto [a, b] = pairs[rng.uniform_index(pairs.size())];
      const double lambda = sample_lambda(rng);
      auto mixed = mixup_pair(std::span<const double>(feats).subspan(a * d, d),
                              std::span<const double>(feats).subspan(b * d, d),
                              std::span<const double>(labels).subspan(a * c, c),
                              std::span<const double>(labels).subspan(b * c, c), lambda);
      feats.insert(feats.end(), mixed.feature.begin(), mixed.feature.end());
      labels.insert(labels.end(), mixed.label.begin(), mixed.label.end());
      batch.origin.push_back(SampleOrigin::mixed);
      batch.draws.push_back({lambda, a, b});
    }
  }

  const std::size_t rows = batch.origin.size();
  batch.features = Tensor::constant({rows, d}, std::move(feats));
  batch.labels = Tensor::constant({rows, c}, std::move(labels));
  return batch;
}

LabeledSamples few_shot_sample(const LabeledSamples& pool, std::span<const std::size_t> classes,
                               std::size_t shots, std::uint64_t seed) {
  if (shots < 1) throw ConfigError("shots must be at least 1");
  if (classes.empty()) throw ConfigError("few_shot_sample: no classes requested");
  Rng rng(seed);
  const std::size_t d = pool.features.cols();
  LabeledSamples out;
  std::vector<double> feats;
  for (auto cls : classes) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool.labels[i] == cls) candidates.push_back(i);
    if (candidates.size() < shots) {
      throw ConfigError("class " + std::to_string(cls) + " has " + std::to_string(candidates.size()) +
                        " samples, fewer than " + std::to_string(shots) + " shots");
    }
    for (std::size_t k = 0; k < shots; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.uniform_index(candidates.size() - k));
      std::swap(candidates[k], candidates[j]);
      auto f = pool.features.values().subspan(candidates[k] * d, d);
      feats.insert(feats.end(), f.begin(), f.end());
      out.labels.push_back(cls);
    }
  }
  out.features = Tensor::constant({out.labels.size(), d}, std::move(feats));
  return out;
}

}  // namespace ptlab
