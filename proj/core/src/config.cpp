#include "ptlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "ptlab/errors.hpp"

namespace ptlab {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "seed",      "num_classes", "dim",        "hidden",   "shots",          "M",
      "tau",       "lambda1",     "lambda2",    "kg_weight", "lr",            "schedule",
      "epochs",    "batch",       "mix_count",  "noise_sigma", "prototype_perturb", "methods",
      "seeds",     "out_dir",     "test_per_class", "mi_hidden", "init_scale", "format",
      "mixup_baselines", "grad_audit"};
  return keys;
}

const std::set<std::string>& known_methods() {
  static const std::set<std::string> m{"zeroshot", "coop", "kgcoop", "prograd", "ours"};
  return m;
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ReportFormat parse_format(std::string_view text) {
  if (text == "md" || text == "markdown") return ReportFormat::markdown;
  if (text == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + std::string(text) + "' (expected md or csv)");
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig c;
  try {
    read(j, "seed", c.seed);
    read(j, "num_classes", c.num_classes);
    read(j, "dim", c.dim);
    read(j, "hidden", c.hidden);
    if (j.contains("shots")) {
      const auto& s = j.at("shots");
      c.shots = s.is_array() ? s.get<std::vector<std::size_t>>() : std::vector<std::size_t>{s.get<std::size_t>()};
    }
    read(j, "test_per_class", c.test_per_class);
    read(j, "noise_sigma", c.noise_sigma);
    read(j, "prototype_perturb", c.prototype_perturb);
    read(j, "M", c.train.context_length);
    read(j, "tau", c.train.tau);
    read(j, "lambda1", c.train.lambda1);
    read(j, "lambda2", c.train.lambda2);
    read(j, "kg_weight", c.train.kg_weight);
    read(j, "lr", c.train.learning_rate);
    if (j.contains("schedule")) c.train.schedule = parse_schedule(j.at("schedule").get<std::string>());
    read(j, "epochs", c.train.epochs);
    read(j, "batch", c.train.batch);
    if (j.contains("mix_count") && !j.at("mix_count").is_null()) {
      c.train.mix_count = j.at("mix_count").get<std::size_t>();
    }
    read(j, "mi_hidden", c.train.mi_hidden);
    read(j, "init_scale", c.train.init_scale);
    read(j, "mixup_baselines", c.train.mixup_baselines);
    read(j, "grad_audit", c.train.grad_audit);
    read(j, "methods", c.methods);
    if (j.contains("seeds")) {
      c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else if (j.contains("seed")) {
      c.seeds = {c.seed};
    }
    read(j, "out_dir", c.out_dir);
    if (j.contains("format")) c.format = parse_format(j.at("format").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {{"seed", seed},
                      {"num_classes", num_classes},
                      {"dim", dim},
                      {"hidden", hidden},
                      {"shots", shots},
                      {"test_per_class", test_per_class},
                      {"noise_sigma", noise_sigma},
                      {"prototype_perturb", prototype_perturb},
                      {"M", train.context_length},
                      {"tau", train.tau},
                      {"lambda1", train.lambda1},
                      {"lambda2", train.lambda2},
                      {"kg_weight", train.kg_weight},
                      {"lr", train.learning_rate},
                      {"schedule", to_string(train.schedule)},
                      {"epochs", train.epochs},
                      {"batch", train.batch},
                      {"mi_hidden", train.mi_hidden},
                      {"init_scale", train.init_scale},
                      {"mixup_baselines", train.mixup_baselines},
                      {"grad_audit", train.grad_audit},
                      {"methods", methods},
                      {"seeds", seeds},
                      {"out_dir", out_dir},
                      {"format", format == ReportFormat::csv ? "csv" : "md"}};
  j["mix_count"] = train.mix_count ? nlohmann::json(*train.mix_count) : nlohmann::json(nullptr);
  return j;
}

void RunConfig::override_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  seeds = {s};
}

void RunConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (dim < 2) throw ConfigError("dim must be at least 2");
  if (hidden < 1) throw ConfigError("hidden must be positive");
  if (shots.empty()) throw ConfigError("shots must not be empty");
  for (auto k : shots)
    if (k < 1) throw ConfigError("shots must be positive");
  if (test_per_class < 1) throw ConfigError("test_per_class must be positive");
  if (!(noise_sigma >= 0.0) || !(prototype_perturb >= 0.0)) throw ConfigError("noise levels must be nonnegative");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  for (const auto& m : methods)
    if (!known_methods().count(m)) throw ConfigError("unknown method '" + m + "'");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  train.validate();
}

std::size_t RunConfig::max_shots() const { return *std::max_element(shots.begin(), shots.end()); }

TaskSpec RunConfig::task_spec(std::size_t task_shots, std::uint64_t task_seed) const {
  TaskSpec s;
  s.num_classes = num_classes;
  s.dim = dim;
  s.shots = task_shots;
  s.test_per_class = test_per_class;
  s.context_length = train.context_length;
  s.noise_sigma = noise_sigma;
  s.prototype_perturb = prototype_perturb;
  s.seed = task_seed;
  return s;
}

TrainConfig RunConfig::train_config(Method method, std::uint64_t run_seed) const {
  TrainConfig t = train;
  t.method = method;
  t.seed = run_seed;
  return t;
}

}  // namespace ptlab
