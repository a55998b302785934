#include "ptlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ptlab/augmentation.hpp"
#include "ptlab/errors.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {
namespace {

constexpr double kAuditEps = 1e-6;
constexpr double kAuditTolerance = 1e-3;

// Current parameter values; wrapped into fresh leaves for every step.
struct ParamState {
  std::size_t context_length = 0;
  std::size_t dim = 0;
  std::vector<double> context;
  bool has_estimator = false;
  std::size_t classes = 0;
  std::size_t hidden = 0;
  std::vector<double> w1, b1, w2, b2;

  std::vector<std::vector<double>*> blocks() {
    std::vector<std::vector<double>*> out{&context};
    if (has_estimator) out.insert(out.end(), {&w1, &b1, &w2, &b2});
    return out;
  }
};

struct Leaves {
  PromptContext ctx;
  std::optional<MIEstimator> est;

  std::vector<Tensor> all() const {
    std::vector<Tensor> out{ctx.vectors};
    if (est) out.insert(out.end(), {est->w1, est->b1, est->w2, est->b2});
    return out;
  }
};

Leaves make_leaves(const ParamState& s) {
  Leaves l{PromptContext::from_values(s.context_length, s.dim, s.context), std::nullopt};
  if (s.has_estimator) l.est = MIEstimator::from_values(s.classes, s.hidden, s.w1, s.b1, s.w2, s.b2);
  return l;
}

struct StepLosses {
  Tensor objective;  // what the optimizer minimizes (recorded in history)
  Tensor ce;
  Tensor general;    // ProGrad's KL term
};

StepLosses forward(const TrainConfig& cfg, const Leaves& leaves, const FewShotTask& task,
                   const SyntheticTextEncoder& encoder, const TrainingBatch& batch) {
  const auto views = encode_views(leaves.ctx, task, encoder, cfg.tau, task.base_class_ids);
  const Tensor logits = similarity_logits(views.learnable, batch.features, cfg.tau);
  StepLosses out;
  out.ce = cross_entropy_with_logits(logits, batch.labels);
  switch (cfg.method) {
    case Method::coop:
      out.objective = out.ce;
      break;
    case Method::kgcoop:
      out.objective = add(out.ce, scale(kg_euclidean_loss(views.handcrafted, views.learnable), cfg.kg_weight));
      break;
    case Method::prograd: {
      const Tensor p_zs = zero_shot_probs(views.handcrafted, batch.features, cfg.tau);
      out.general = kl_general_loss_with_logits(p_zs, logits);
      out.objective = out.ce;
      break;
    }
    case Method::ours: {
      const Tensor hand_logits = similarity_logits(views.handcrafted, batch.features, cfg.tau);
      const auto joint = joint_probability(*leaves.est, hand_logits, logits);
      out.objective = total_loss(out.ce, joint, LossWeights{cfg.lambda1, cfg.lambda2});
      break;
    }
  }
  return out;
}

// Originals that all share one class cannot be mixed; such draws are
// rejected and redrawn from the same stream.
TrainingBatch draw_batch(const FewShotTask& task, std::size_t batch, std::size_t mix, Rng& rng, std::size_t step) {
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    try {
      return build_training_batch(task.train, task.base_class_ids, batch, mix, rng);
    } catch (const PairingError&) {
      if (mix == 0) throw;
    }
  }
  throw TrainingError(step, "could not draw a batch covering two classes");
}

std::vector<std::size_t> positions_of(const std::vector<std::size_t>& labels,
                                      const std::vector<std::size_t>& classes) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) {
    out.push_back(static_cast<std::size_t>(std::find(classes.begin(), classes.end(), l) - classes.begin()));
  }
  return out;
}

void check_finite(std::span<const double> v, std::size_t step, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw TrainingError(step, std::string("non-finite ") + what);
  }
}

std::vector<double> to_binary32(std::vector<double> v) {
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  return v;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::ours: return "ours";
    case Method::coop: return "coop";
    case Method::kgcoop: return "kgcoop";
    case Method::prograd: return "prograd";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "ours") return Method::ours;
  if (text == "coop") return Method::coop;
  if (text == "kgcoop") return Method::kgcoop;
  if (text == "prograd") return Method::prograd;
  throw ConfigError("unknown method '" + std::string(text) + "'");
}

std::string_view to_string(Schedule s) { return s == Schedule::constant ? "constant" : "cosine"; }

Schedule parse_schedule(std::string_view text) {
  if (text == "constant") return Schedule::constant;
  if (text == "cosine") return Schedule::cosine;
  throw ConfigError("unknown schedule '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch < 2) throw ConfigError("batch must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
  if (context_length < 1) throw ConfigError("context length must be positive");
  if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
  if (mi_hidden < 1) throw ConfigError("mi_hidden must be positive");
  for (double w : {lambda1, lambda2, kg_weight}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and nonnegative");
  }
}

std::size_t TrainConfig::effective_mix_count() const {
  if (method != Method::ours && !mixup_baselines) return 0;
  return mix_count.value_or(batch);
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"method", to_string(method)},
                      {"epochs", epochs},
                      {"batch", batch},
                      {"lr", learning_rate},
                      {"schedule", to_string(schedule)},
                      {"lambda1", lambda1},
                      {"lambda2", lambda2},
                      {"kg_weight", kg_weight},
                      {"tau", tau},
                      {"M", context_length},
                      {"seed", seed},
                      {"init_scale", init_scale},
                      {"mi_hidden", mi_hidden},
                      {"mixup_baselines", mixup_baselines},
                      {"grad_audit", grad_audit}};
  j["mix_count"] = mix_count ? nlohmann::json(*mix_count) : nlohmann::json(nullptr);
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.method = parse_method(j.at("method").get<std::string>());
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.learning_rate = j.at("lr").get<double>();
    c.schedule = parse_schedule(j.at("schedule").get<std::string>());
    c.lambda1 = j.at("lambda1").get<double>();
    c.lambda2 = j.at("lambda2").get<double>();
    c.kg_weight = j.at("kg_weight").get<double>();
    c.tau = j.at("tau").get<double>();
    c.context_length = j.at("M").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.init_scale = j.at("init_scale").get<double>();
    c.mi_hidden = j.at("mi_hidden").get<std::size_t>();
    c.mixup_baselines = j.at("mixup_baselines").get<bool>();
    c.grad_audit = j.at("grad_audit").get<bool>();
    if (!j.at("mix_count").is_null()) c.mix_count = j.at("mix_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

std::uint64_t TrainConfig::hash() const { return json_hash(to_json()); }

std::vector<double> prograd_project(std::span<const double> g_ce, std::span<const double> g_general) {
  if (g_ce.size() != g_general.size()) throw ShapeError("prograd_project: gradient sizes differ");
  double dot = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < g_ce.size(); ++i) {
    dot += g_ce[i] * g_general[i];
    nn += g_general[i] * g_general[i];
  }
  std::vector<double> out(g_ce.begin(), g_ce.end());
  if (dot >= 0.0 || nn == 0.0) return out;
  const double coef = dot / nn;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= coef * g_general[i];
  return out;
}

void optimizer_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("optimizer_step: parameter/gradient size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

double lr_at(Schedule schedule, std::size_t step, std::size_t total_steps, double base_lr) {
  if (schedule == Schedule::constant) return base_lr;
  if (total_steps == 0) return base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

TrainedModel train(const TrainConfig& config, const FewShotTask& task, const SyntheticTextEncoder& encoder,
                   std::optional<PromptContext> initial_context) {
  config.validate();
  if (task.train.size() == 0 || task.base_class_ids.empty()) throw ConfigError("task has no base-split training data");
  if (encoder.dim() != task.dim()) throw ConfigError("encoder dim does not match task dim");

  const std::size_t d = task.dim();
  ParamState state;
  state.context_length = config.context_length;
  state.dim = d;
  if (initial_context) {
    if (initial_context->length() != config.context_length || initial_context->dim() != d) {
      throw ConfigError("initial context does not match M x dim");
    }
    state.context = initial_context->vectors.to_vector();
  } else {
    state.context = init_context(config.context_length, d, config.init_scale, Rng::derive(config.seed, "context"))
                        .vectors.to_vector();
  }
  if (config.method == Method::ours) {
    const auto est = MIEstimator::init(task.base_class_ids.size(), config.mi_hidden,
                                       Rng::derive(config.seed, "mi-estimator"));
    state.has_estimator = true;
    state.classes = est.classes();
    state.hidden = est.hidden();
    state.w1 = est.w1.to_vector();
    state.b1 = est.b1.to_vector();
    state.w2 = est.w2.to_vector();
    state.b2 = est.b2.to_vector();
  }

  Rng batch_rng(Rng::derive(config.seed, "batches"));
  Rng audit_rng(Rng::derive(config.seed, "grad-audit"));
  const std::size_t mix = config.effective_mix_count();
  const std::size_t steps_per_epoch = (task.train.size() + config.batch - 1) / config.batch;
  const std::size_t total_steps = config.epochs * steps_per_epoch;
  const auto train_targets = positions_of(task.train.labels, task.base_class_ids);

  TrainedModel model;
  model.config = config;
  model.config_hash = config.hash();
  model.task_hash = task.hash();
  model.history.reserve(config.epochs);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const auto batch = draw_batch(task, config.batch, mix, batch_rng, step);
      const Leaves leaves = make_leaves(state);
      const auto params = leaves.all();
      StepLosses losses;
      std::vector<std::vector<double>> grads;
      try {
        losses = forward(config, leaves, task, encoder, batch);
        if (config.method == Method::prograd) {
          const auto g_ce = backward(losses.ce).get_or_zero(leaves.ctx.vectors).to_vector();
          const auto g_kl = backward(losses.general).get_or_zero(leaves.ctx.vectors).to_vector();
          grads.push_back(prograd_project(g_ce, g_kl));
        } else {
          const auto g = backward(losses.objective);
          for (const auto& p : params) grads.push_back(g.get_or_zero(p).to_vector());
        }
      } catch (const DomainError& e) {
        throw TrainingError(step, e.what());
      }
      const double loss = losses.objective.item();
      if (!std::isfinite(loss)) throw TrainingError(step, "non-finite loss");
      for (const auto& g : grads) check_finite(g, step, "gradient");

      if (config.grad_audit && config.method == Method::ours && s == 0) {
        // One randomly chosen parameter entry against a central difference.
        std::size_t total = 0;
        for (const auto& g : grads) total += g.size();
        std::size_t pick = audit_rng.uniform_index(total);
        std::size_t block = 0;
        while (pick >= grads[block].size()) pick -= grads[block++].size();
        auto probe = [&](double delta) {
          ParamState shifted = state;
          (*shifted.blocks()[block])[pick] += delta;
          return forward(config, make_leaves(shifted), task, encoder, batch).objective.item();
        };
        const double numeric = (probe(kAuditEps) - probe(-kAuditEps)) / (2.0 * kAuditEps);
        record.audit_error = std::abs(grads[block][pick] - numeric) / std::max(1.0, std::abs(numeric));
        if (record.audit_error > kAuditTolerance) {
          throw TrainingError(step, "gradient audit failed (relative error " +
                                        std::to_string(record.audit_error) + ")");
        }
      }

      const double lr = lr_at(config.schedule, step, total_steps, config.learning_rate);
      auto blocks = state.blocks();
      for (std::size_t b = 0; b < grads.size(); ++b) optimizer_step(*blocks[b], grads[b], lr);
      loss_sum += loss;
    }
    record.mean_loss = loss_sum / static_cast<double>(steps_per_epoch);
    const auto ctx = PromptContext{Tensor::constant({state.context_length, d}, state.context)};
    const auto views = encode_views(ctx, task, encoder, config.tau, task.base_class_ids);
    record.train_accuracy =
        argmax_accuracy(similarity_logits(views.learnable, task.train.features, config.tau), train_targets);
    model.history.push_back(record);
  }

  model.steps = step;
  model.context = PromptContext::from_values(state.context_length, d, to_binary32(state.context));
  if (state.has_estimator) {
    model.estimator = MIEstimator::from_values(state.classes, state.hidden, to_binary32(state.w1),
                                               to_binary32(state.b1), to_binary32(state.w2), to_binary32(state.b2));
  }
  return model;
}

}  // namespace ptlab
