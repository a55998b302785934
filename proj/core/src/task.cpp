#include "ptlab/task.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ptlab/errors.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {
namespace {

std::vector<double> unit_gaussian(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double ss = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    ss += x * x;
  }
  const double n = std::sqrt(ss);
  for (auto& x : v) x /= n;
  return v;
}

std::vector<double> normalized(std::vector<double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  if (!(n > 0.0)) throw DomainError("cannot normalize a zero vector");
  for (auto& x : v) x /= n;
  return v;
}

// p + scale * N(0, I/d), renormalized; returned unchanged when scale is zero so
// that noise-free tasks reproduce their anchors bit for bit.
std::vector<double> jitter(Rng& rng, std::span<const double> anchor, double scale) {
  std::vector<double> out(anchor.begin(), anchor.end());
  if (scale == 0.0) return out;
  const double sd = scale / std::sqrt(static_cast<double>(out.size()));
  for (auto& x : out) x += sd * rng.normal();
  return normalized(std::move(out));
}

std::vector<std::size_t> as_indices(const nlohmann::json& j) { return j.get<std::vector<std::size_t>>(); }

}  // namespace

std::string_view to_string(Split split) { return split == Split::base ? "base" : "new"; }

Split parse_split(std::string_view text) {
  if (text == "base") return Split::base;
  if (text == "new") return Split::novel;
  throw ConfigError("unknown split '" + std::string(text) + "' (expected base or new)");
}

nlohmann::json TaskSpec::to_json() const {
  return {{"num_classes", num_classes},
          {"dim", dim},
          {"shots", shots},
          {"test_per_class", test_per_class},
          {"context_length", context_length},
          {"noise_sigma", noise_sigma},
          {"prototype_perturb", prototype_perturb},
          {"seed", seed}};
}

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
  TaskSpec s;
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.dim = j.at("dim").get<std::size_t>();
  s.shots = j.at("shots").get<std::size_t>();
  s.test_per_class = j.at("test_per_class").get<std::size_t>();
  s.context_length = j.at("context_length").get<std::size_t>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.prototype_perturb = j.at("prototype_perturb").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::uint64_t json_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t FewShotTask::hash() const {
  auto j = spec.to_json();
  j["encoder_seed"] = encoder_seed;
  j["encoder_hidden"] = encoder_hidden;
  return json_hash(j);
}

FewShotTask gen_synthetic_task(const TaskSpec& spec, const SyntheticTextEncoder& encoder) {
  if (spec.num_classes < 2) {
    throw ConfigError("num_classes must be at least 2");
  }
  if (spec.dim < 2) throw ConfigError("dim must be at least 2");
  if (spec.shots < 1) throw ConfigError("shots must be at least 1");
  if (spec.test_per_class < 1) throw ConfigError("test_per_class must be at least 1");
  if (spec.context_length < 1) throw ConfigError("context_length must be at least 1");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw ConfigError("noise_sigma must be finite and nonnegative");
  }
  if (!(spec.prototype_perturb >= 0.0) || !std::isfinite(spec.prototype_perturb)) {
    throw ConfigError("prototype_perturb must be finite and nonnegative");
  }
  if (encoder.dim() != spec.dim) throw ConfigError("encoder dim does not match task dim");

  const std::size_t C = spec.num_classes, d = spec.dim, M = spec.context_length;
  FewShotTask task;
  task.spec = spec;
  task.encoder_seed = encoder.seed();
  task.encoder_hidden = encoder.hidden();

  Rng token_rng(Rng::derive(spec.seed, "class-tokens"));
  std::vector<double> tokens;
  tokens.reserve(C * d);
  for (std::size_t i = 0; i < C; ++i) {
    auto c = unit_gaussian(token_rng, d);
    tokens.insert(tokens.end(), c.begin(), c.end());
  }
  task.class_tokens = Tensor::constant({C, d}, std::move(tokens));

  Rng template_rng(Rng::derive(spec.seed, "template"));
  std::vector<double> tmpl;
  tmpl.reserve(M * d);
  for (std::size_t m = 0; m < M; ++m) {
    auto t = unit_gaussian(template_rng, d);
    tmpl.insert(tmpl.end(), t.begin(), t.end());
  }
  task.template_tokens = Tensor::constant({M, d}, std::move(tmpl));

  std::vector<Tensor> rows;
  rows.reserve(C);
  for (std::size_t i = 0; i < C; ++i) {
    const Tensor c = slice_rows(task.class_tokens, i, i + 1);
    const Tensor prompt[] = {task.template_tokens, c};
    rows.push_back(encoder.encode(concat_rows(prompt)));
  }
  task.handcrafted = concat_rows(rows);

  Rng proto_rng(Rng::derive(spec.seed, "prototypes"));
  std::vector<std::vector<double>> prototypes;
  prototypes.reserve(C);
  for (std::size_t i = 0; i < C; ++i) {
    prototypes.push_back(jitter(proto_rng, task.handcrafted.values().subspan(i * d, d),
                                spec.prototype_perturb));
  }

  const std::size_t n_base = (C + 1) / 2;
  for (std::size_t i = 0; i < C; ++i) (i < n_base ? task.base_class_ids : task.new_class_ids).push_back(i);

  auto draw = [&](Rng& rng, const std::vector<std::size_t>& classes, std::size_t per_class) {
    LabeledSamples s;
    std::vector<double> feats;
    feats.reserve(classes.size() * per_class * d);
    for (auto cls : classes) {
      for (std::size_t k = 0; k < per_class; ++k) {
        auto f = jitter(rng, prototypes[cls], spec.noise_sigma);
        feats.insert(feats.end(), f.begin(), f.end());
        s.labels.push_back(cls);
      }
    }
    s.features = Tensor::constant({s.labels.size(), d}, std::move(feats));
    return s;
  };
  Rng train_rng(Rng::derive(spec.seed, "train-samples"));
  task.train = draw(train_rng, task.base_class_ids, spec.shots);
  std::vector<std::size_t> all(C);
  for (std::size_t i = 0; i < C; ++i) all[i] = i;
  Rng test_rng(Rng::derive(spec.seed, "test-samples"));
  task.test = draw(test_rng, all, spec.test_per_class);
  return task;
}

SyntheticTextEncoder encoder_for(const FewShotTask& task) {
  return SyntheticTextEncoder(task.encoder_seed, task.dim(), task.encoder_hidden);
}

EmbeddingStore task_to_store(const FewShotTask& task) {
  EmbeddingStore store;
  store.dim = task.dim();
  for (std::size_t i = 0; i < task.num_classes(); ++i) store.class_names.push_back("class_" + std::to_string(i));
  store.put("class_tokens", task.class_tokens);
  store.put("template_tokens", task.template_tokens);
  store.put("handcrafted_embeddings", task.handcrafted);
  store.put("train_features", task.train.features);
  store.put("test_features", task.test.features);
  store.meta = {{"kind", "task"},
                {"spec", task.spec.to_json()},
                {"encoder", {{"seed", task.encoder_seed}, {"hidden", task.encoder_hidden}}},
                {"train_labels", task.train.labels},
                {"test_labels", task.test.labels},
                {"base_class_ids", task.base_class_ids},
                {"new_class_ids", task.new_class_ids}};
  return store;
}

FewShotTask task_from_store(const EmbeddingStore& store) {
  FewShotTask task;
  try {
    const auto& meta = store.meta;
    if (!meta.is_object() || meta.value("kind", "") != "task") throw FormatError("store is not a task file");
    task.spec = TaskSpec::from_json(meta.at("spec"));
    task.encoder_seed = meta.at("encoder").at("seed").get<std::uint64_t>();
    task.encoder_hidden = meta.at("encoder").at("hidden").get<std::size_t>();
    task.train.labels = as_indices(meta.at("train_labels"));
    task.test.labels = as_indices(meta.at("test_labels"));
    task.base_class_ids = as_indices(meta.at("base_class_ids"));
    task.new_class_ids = as_indices(meta.at("new_class_ids"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed task metadata: ") + e.what());
  }
  if (store.dim != task.spec.dim) throw FormatError("task dim does not match store dim");
  task.class_tokens = store.tensor("class_tokens");
  task.template_tokens = store.tensor("template_tokens");
  task.handcrafted = store.tensor("handcrafted_embeddings");
  task.train.features = store.tensor("train_features");
  task.test.features = store.tensor("test_features");
  const std::size_t C = task.spec.num_classes;
  if (task.class_tokens.rows() != C || task.handcrafted.rows() != C ||
      task.train.features.rows() != task.train.labels.size() ||
      task.test.features.rows() != task.test.labels.size() ||
      task.base_class_ids.size() + task.new_class_ids.size() != C) {
    throw FormatError("task matrices disagree with task metadata");
  }
  for (auto id : task.train.labels)
    if (id >= C) throw FormatError("train label out of range");
  for (auto id : task.test.labels)
    if (id >= C) throw FormatError("test label out of range");
  return task;
}

void save_task(const FewShotTask& task, const std::filesystem::path& path) {
  save_embedding_store(task_to_store(task), path);
}

FewShotTask load_task(const std::filesystem::path& path) {
  return task_from_store(load_embedding_store(path));
}

}  // namespace ptlab
