#include "ptlab/checkpoint.hpp"

#include <string>

#include "ptlab/errors.hpp"

namespace ptlab {
namespace {

std::vector<double> widened(const NamedMatrix& m) { return {m.data.begin(), m.data.end()}; }

}  // namespace

EmbeddingStore checkpoint_to_store(const TrainedModel& model) {
  EmbeddingStore store;
  store.dim = model.context.dim();
  store.put("context_vectors", model.context.vectors);
  if (model.estimator) {
    const auto& est = *model.estimator;
    store.put("mi_w1", est.w1);
    store.put("mi_b1", 1, est.hidden(), est.b1.values());
    store.put("mi_w2", est.w2);
    store.put("mi_b2", 1, est.classes(), est.b2.values());
  }
  auto history = nlohmann::json::array();
  for (const auto& r : model.history) {
    history.push_back({{"epoch", r.epoch},
                       {"loss", r.mean_loss},
                       {"train_accuracy", r.train_accuracy},
                       {"audit_error", r.audit_error}});
  }
  store.meta = {{"kind", "checkpoint"},
                {"config", model.config.to_json()},
                {"config_hash", model.config_hash},
                {"task_hash", model.task_hash},
                {"step", model.steps},
                {"seed", model.config.seed},
                {"history", std::move(history)}};
  return store;
}

TrainedModel checkpoint_from_store(const EmbeddingStore& store) {
  TrainedModel model;
  try {
    const auto& meta = store.meta;
    if (!meta.is_object() || meta.value("kind", "") != "checkpoint") throw FormatError("store is not a checkpoint");
    model.config = TrainConfig::from_json(meta.at("config"));
    model.config_hash = meta.at("config_hash").get<std::uint64_t>();
    model.task_hash = meta.at("task_hash").get<std::uint64_t>();
    model.steps = meta.at("step").get<std::size_t>();
    for (const auto& r : meta.at("history")) {
      model.history.push_back({r.at("epoch").get<std::size_t>(), r.at("loss").get<double>(),
                               r.at("train_accuracy").get<double>(), r.at("audit_error").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed checkpoint config: ") + e.what());
  }
  const auto& ctx = store.matrix("context_vectors");
  model.context = PromptContext::from_values(ctx.rows, ctx.cols, widened(ctx));
  if (store.contains("mi_w1")) {
    const auto& w1 = store.matrix("mi_w1");
    const auto& b1 = store.matrix("mi_b1");
    const auto& w2 = store.matrix("mi_w2");
    const auto& b2 = store.matrix("mi_b2");
    const std::size_t hidden = w1.rows, classes = w1.cols;
    if (b1.rows * b1.cols != hidden || w2.rows != classes || w2.cols != hidden || b2.rows * b2.cols != classes) {
      throw FormatError("estimator matrices have inconsistent extents");
    }
    model.estimator = MIEstimator::from_values(classes, hidden, widened(w1), widened(b1), widened(w2), widened(b2));
  }
  return model;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  save_embedding_store(checkpoint_to_store(model), path);
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_store(load_embedding_store(path));
}

}  // namespace ptlab
