#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "ptlab/config.hpp"
#include "ptlab/errors.hpp"
#include "ptlab/evaluation.hpp"
#include "ptlab/prompt.hpp"
#include "ptlab/report.hpp"
#include "support.hpp"

using namespace ptlab;
using namespace ptlab::testing;

namespace {

std::size_t count_columns(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), '|')) - 1;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("harmonic mean reference values") {
  CHECK(std::abs(harmonic_mean(72.06, 59.69) - 65.29) <= 0.005);
  CHECK(std::abs(harmonic_mean(72.42, 68.00) - 70.14) <= 0.005);
}

TEST_CASE("harmonic mean properties") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const double a = rng.uniform(), b = rng.uniform();
    CHECK(harmonic_mean(a, b) == harmonic_mean(b, a));
    CHECK(harmonic_mean(a, b) <= (a + b) / 2.0 + 1e-15);
    CHECK(harmonic_mean(a, a) == doctest::Approx(a).epsilon(1e-15));
    CHECK(std::abs(harmonic_mean(a, b) - 2.0 * a * b / (a + b)) <= 1e-12);
  }
  CHECK(harmonic_mean(0.0, 0.0) == 0.0);
  CHECK(harmonic_mean(0.3, 0.7) < 0.5);
  CHECK_THROWS_AS(harmonic_mean(-0.1, 0.5), DomainError);
  CHECK_THROWS_AS(harmonic_mean(0.5, 100.5), DomainError);
  CHECK_THROWS_AS(harmonic_mean(std::nan(""), 0.5), DomainError);
}

TEST_CASE("a noise-free task is classified perfectly by the template context") {
  RunConfig cfg = tiny_config();
  cfg.noise_sigma = 0.0;
  cfg.prototype_perturb = 0.0;
  const auto p = prepare_task(cfg, 2, 1);
  TrainedModel model;
  model.config = cfg.train_config(Method::coop, 1);
  model.context = PromptContext{p.task.template_tokens};
  CHECK(evaluate_accuracy(model, p.task, Split::base, p.encoder) == 1.0);
  CHECK(evaluate_accuracy(model, p.task, Split::novel, p.encoder) == 1.0);
  CHECK(evaluate_zero_shot(p.task, Split::novel, 0.01) == 1.0);
}

TEST_CASE("random class embeddings score 1/C_split on average") {
  RunConfig cfg = regression_config();
  const auto p = prepare_task(cfg, 4, 1);
  Rng rng(5);
  const std::size_t trials = 400;
  std::vector<double> acc;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto rows = l2_normalize_rows(Tensor::constant({5, 32}, random_values(rng, 5 * 32)));
    acc.push_back(split_accuracy(rows, p.task, Split::novel, 0.01));
  }
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / trials;
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  const double se = std::sqrt(var / (trials - 1) / trials);
  CHECK(std::abs(mean - 0.2) <= 3.0 * se);
}

TEST_CASE("accuracy does not depend on the order of the test samples") {
  const RunConfig cfg = tiny_config();
  auto p = prepare_task(cfg, 2, 1);
  const double before = evaluate_zero_shot(p.task, Split::base, 0.01);
  const std::size_t n = p.task.test.size(), d = p.task.dim();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::rotate(order.begin(), order.begin() + 3, order.end());
  std::vector<double> feats;
  std::vector<std::size_t> labels;
  for (auto i : order) {
    auto f = p.task.test.features.values().subspan(i * d, d);
    feats.insert(feats.end(), f.begin(), f.end());
    labels.push_back(p.task.test.labels[i]);
  }
  p.task.test = LabeledSamples{Tensor::constant({n, d}, feats), labels};
  CHECK(evaluate_zero_shot(p.task, Split::base, 0.01) == before);
}

TEST_CASE("an empty split is a configuration error") {
  const RunConfig cfg = tiny_config();
  auto p = prepare_task(cfg, 2, 1);
  p.task.new_class_ids.clear();
  CHECK_THROWS_AS(evaluate_zero_shot(p.task, Split::novel, 0.01), ConfigError);
}

TEST_CASE("a single method, shot and seed gives a single report row") {
  const RunConfig cfg = tiny_config();
  const std::vector<std::string> methods{"coop"};
  const std::vector<std::size_t> shots{2};
  const std::vector<std::uint64_t> seeds{1};
  const auto report = base_new_protocol(cfg, methods, shots, seeds);
  REQUIRE(report.rows.size() == 1);
  REQUIRE(report.runs.size() == 1);
  const auto& r = report.runs[0];
  CHECK(r.base_acc >= 0.0);
  CHECK(r.new_acc <= 1.0);
  CHECK(std::abs(r.hm - 2.0 * r.base_acc * r.new_acc / (r.base_acc + r.new_acc)) <= 1e-9);
  const auto md = lines_of(render_report(report, ReportFormat::markdown));
  const auto header = std::find_if(md.begin(), md.end(), [](const std::string& l) { return l.rfind("| Method", 0) == 0; });
  REQUIRE(header != md.end());
  CHECK(count_columns(*(header + 2)) == 4);
}

TEST_CASE("report shapes, ordering and aggregation") {
  RunConfig cfg = tiny_config();
  cfg.shots = {1, 2};
  cfg.seeds = {2, 1};
  const std::vector<std::string> methods{"zeroshot", "coop", "kgcoop"};
  const auto report = base_new_protocol(cfg, methods, cfg.shots, cfg.seeds);
  CHECK(report.runs.size() == 3 * 2 * 2);
  CHECK(report.methods() == std::vector<std::string>{"coop", "kgcoop", "zeroshot"});
  CHECK(report.seeds() == std::vector<std::uint64_t>{1, 2});
  for (std::size_t i = 1; i < report.runs.size(); ++i) {
    const auto& a = report.runs[i - 1];
    const auto& b = report.runs[i];
    CHECK(std::tie(a.method, a.shots, a.seed) < std::tie(b.method, b.shots, b.seed));
  }
  for (const auto& row : report.rows) {
    double base = 0, novel = 0, hm = 0;
    for (const auto& r : report.runs)
      if (r.method == row.method && r.shots == row.shots) {
        base += r.base_acc / 2.0;
        novel += r.new_acc / 2.0;
        hm += r.hm / 2.0;
      }
    CHECK(row.base_acc == doctest::Approx(base).epsilon(1e-15));
    CHECK(row.new_acc == doctest::Approx(novel).epsilon(1e-15));
    CHECK(row.mean_seed_hm == doctest::Approx(hm).epsilon(1e-15));
    CHECK(std::abs(row.hm - harmonic_mean(row.base_acc, row.new_acc)) <= 1e-12);
  }

  const auto md = lines_of(render_report(report, ReportFormat::markdown));
  for (const auto& l : md)
    if (l.rfind("| Method", 0) == 0 && l.find("Base") != std::string::npos) CHECK(count_columns(l) == 3 * 2 + 1);

  const std::string csv = render_report(report, ReportFormat::csv);
  const auto rows = lines_of(csv);
  CHECK(rows.size() == 3 * 2 * 2 + 1);
  CHECK(rows[0] == "method,K,seed,base_acc,new_acc,hm");
  const auto parsed = parse_report_csv(csv);
  REQUIRE(parsed.size() == report.runs.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].method == report.runs[i].method);
    CHECK(parsed[i].shots == report.runs[i].shots);
    CHECK(parsed[i].seed == report.runs[i].seed);
    CHECK(std::abs(parsed[i].base_acc - report.runs[i].base_acc) <= 0.5e-4);
    CHECK(std::abs(parsed[i].new_acc - report.runs[i].new_acc) <= 0.5e-4);
    CHECK(std::abs(parsed[i].hm - report.runs[i].hm) <= 0.5e-4);
  }
  const std::string decimals = rows[1].substr(rows[1].rfind(',') + 1);
  CHECK(decimals.size() - decimals.find('.') - 1 == 4);
}

TEST_CASE("repeated protocol runs produce identical report bytes") {
  RunConfig cfg = tiny_config();
  const auto a = base_new_protocol(cfg, cfg.methods, cfg.shots, cfg.seeds);
  const auto b = base_new_protocol(cfg, cfg.methods, cfg.shots, cfg.seeds);
  CHECK(render_report(a, ReportFormat::markdown) == render_report(b, ReportFormat::markdown));
  CHECK(render_report(a, ReportFormat::csv) == render_report(b, ReportFormat::csv));
}

TEST_CASE("ablation has three rows in fixed order, the first being plain CoOp") {
  const RunConfig cfg = tiny_config();
  const auto report = ablation_run(cfg);
  CHECK(report.methods() == std::vector<std::string>{"coop", "ours_mi", "ours_mi_aug"});
  const std::vector<std::string> coop{"coop"};
  const auto plain = base_new_protocol(cfg, coop, cfg.shots, cfg.seeds);
  CHECK(report.runs[0].base_acc == plain.runs[0].base_acc);
  CHECK(report.runs[0].new_acc == plain.runs[0].new_acc);
  CHECK(report.runs[0].hm == plain.runs[0].hm);
}

TEST_CASE("the ablation's no-mixup row equals ours with zero mixed samples") {
  RunConfig cfg = tiny_config();
  const auto p = prepare_task(cfg, 2, 1);
  const auto mi = run_method(cfg, "ours_mi", p, 2, 1);
  cfg.train.mix_count = 0;
  const auto ours = run_method(cfg, "ours", p, 2, 1);
  CHECK(mi.base_acc == ours.base_acc);
  CHECK(mi.new_acc == ours.new_acc);
}

TEST_CASE("emit_report writes the rendering and reports unwritable paths") {
  const RunConfig cfg = tiny_config();
  const std::vector<std::string> methods{"zeroshot"};
  const auto report = base_new_protocol(cfg, methods, cfg.shots, cfg.seeds);
  const auto path = std::filesystem::temp_directory_path() / "ptlab_test_report.csv";
  emit_report(report, ReportFormat::csv, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == render_report(report, ReportFormat::csv));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(emit_report(report, ReportFormat::csv, "/nonexistent-dir/x/report.csv"), IoError);
}

TEST_CASE("malformed CSV reports are rejected") {
  CHECK_THROWS_AS(parse_report_csv("a,b\n"), FormatError);
  CHECK_THROWS_AS(parse_report_csv("method,K,seed,base_acc,new_acc,hm\ncoop,4,1,0.5\n"), FormatError);
  CHECK_THROWS_AS(parse_report_csv("method,K,seed,base_acc,new_acc,hm\ncoop,x,1,0.5,0.5,0.5\n"), FormatError);
}

TEST_CASE("config schema") {
  const auto j = nlohmann::json::parse(R"({
    "seed": 4, "num_classes": 6, "dim": 12, "hidden": 20, "shots": 2, "M": 3, "tau": 0.05,
    "lambda1": 0.5, "lambda2": 1.5, "kg_weight": 4, "lr": 0.02, "schedule": "cosine", "epochs": 7,
    "batch": 3, "mix_count": 2, "noise_sigma": 0.1, "prototype_perturb": 0.05,
    "methods": ["coop", "ours"], "out_dir": "out"})");
  const auto c = RunConfig::from_json(j);
  CHECK(c.seed == 4);
  CHECK(c.shots == std::vector<std::size_t>{2});
  CHECK(c.seeds == std::vector<std::uint64_t>{4});
  CHECK(c.train.context_length == 3);
  CHECK(c.train.schedule == Schedule::cosine);
  CHECK(c.train.mix_count == 2u);
  CHECK(c.train.seed == 4);
  CHECK(c.out_dir == "out");
  CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());

  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"sead": 1})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"dim": "big"})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"methods": ["cocoop"]})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"schedule": "step"})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse("[1, 2]")), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);

  const auto path = std::filesystem::temp_directory_path() / "ptlab_test_bad.json";
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(RunConfig::load(path), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("seed override replaces the seed everywhere") {
  RunConfig c;
  c.override_seed(9);
  CHECK(c.seed == 9);
  CHECK(c.train.seed == 9);
  CHECK(c.seeds == std::vector<std::uint64_t>{9});
  CHECK(c.train_config(Method::coop, 9).seed == 9);
  CHECK(c.task_spec(4, 9).seed == 9);
}

TEST_CASE("on the default synthetic task ours beats CoOp on HM and new-split accuracy") {
  const RunConfig cfg = regression_config();
  const std::vector<std::string> methods{"coop", "ours"};
  const auto report = base_new_protocol(cfg, methods, cfg.shots, cfg.seeds);
  const auto& coop = report.row("coop", 4);
  const auto& ours = report.row("ours", 4);
  CHECK(ours.hm >= coop.hm);
  CHECK(ours.new_acc >= coop.new_acc);
  CHECK(coop.new_acc == doctest::Approx(327.0 / 750).epsilon(1e-12));
  CHECK(ours.new_acc == doctest::Approx(349.0 / 750).epsilon(1e-12));
  CHECK(ours.base_acc == doctest::Approx(569.0 / 750).epsilon(1e-12));
}

TEST_CASE("the shipped default config loads and matches the regression setup") {
  const auto c = RunConfig::load(std::filesystem::path(PTLAB_CONFIG_DIR) / "default.json");
  const auto r = regression_config();
  CHECK(c.num_classes == r.num_classes);
  CHECK(c.dim == r.dim);
  CHECK(c.shots == r.shots);
  CHECK(c.seeds == r.seeds);
  CHECK(c.train.to_json() == r.train.to_json());
}
