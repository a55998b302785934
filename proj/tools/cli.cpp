#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "ptlab/checkpoint.hpp"
#include "ptlab/config.hpp"
#include "ptlab/errors.hpp"
#include "ptlab/evaluation.hpp"
#include "ptlab/gradient_suite.hpp"
#include "ptlab/report.hpp"
#include "ptlab/trainer.hpp"

namespace ptlab {
namespace {

struct Options {
  std::string config, task, method, out, ckpt;
  std::string split = "both";
  std::string format;
  std::optional<std::uint64_t> seed;
  std::uint64_t gradcheck_seed = 1;
  std::size_t trials = 100;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg = RunConfig::load(o.config);
  if (o.seed) cfg.override_seed(*o.seed);
  cfg.validate();
  return cfg;
}

ReportFormat format_for(const Options& o, const RunConfig& cfg) {
  return o.format.empty() ? cfg.format : parse_format(o.format);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int cmd_gen_task(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const auto prepared = prepare_task(cfg, cfg.max_shots(), cfg.seed);
  save_task(prepared.task, o.out);
  out << "wrote task " << o.out << " (C=" << prepared.task.num_classes() << ", dim=" << prepared.task.dim()
      << ", K=" << cfg.max_shots() << ", hash " << hex(prepared.task.hash()) << ")\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const FewShotTask task = load_task(o.task);
  const std::string method = o.method.empty() ? std::string("ours") : o.method;
  const TrainedModel model = train(cfg.train_config(parse_method(method), cfg.seed), task, encoder_for(task));
  save_checkpoint(model, o.out);
  const auto& last = model.history.back();
  out << "trained " << method << " for " << model.steps << " steps; final loss " << last.mean_loss
      << ", train accuracy " << last.train_accuracy << "\nwrote checkpoint " << o.out << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const TrainedModel model = load_checkpoint(o.ckpt);
  const FewShotTask task = load_task(o.task);
  const auto encoder = encoder_for(task);
  const ReportFormat format = o.format.empty() ? ReportFormat::markdown : parse_format(o.format);
  const bool base = o.split == "base" || o.split == "both";
  const bool novel = o.split == "new" || o.split == "both";
  if (!base && !novel) throw ConfigError("--split must be base, new or both");

  EvalReport report;
  report.title = "Evaluation";
  RunResult r{std::string(to_string(model.config.method)), task.spec.shots, model.config.seed,
              std::nan(""), std::nan(""), std::nan("")};
  if (base) r.base_acc = evaluate_accuracy(model, task, Split::base, encoder);
  if (novel) r.new_acc = evaluate_accuracy(model, task, Split::novel, encoder);
  if (base && novel) r.hm = harmonic_mean(r.base_acc, r.new_acc);
  report.runs.push_back(r);
  report.config = model.config.to_json();
  if (model.task_hash != task.hash()) report.warnings.push_back("checkpoint was trained on a different task");
  if (!o.config.empty()) {
    RunConfig cfg = RunConfig::load(o.config);
    if (o.seed) cfg.override_seed(*o.seed);
    if (cfg.train_config(model.config.method, cfg.seed).hash() != model.config_hash) {
      report.warnings.push_back("config differs from the one the checkpoint was trained with");
    }
  }
  report.finalize();
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";

  const std::string text = render_report(report, format);
  if (!o.out.empty()) emit_report(report, format, o.out);
  out << text;
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(o.gradcheck_seed);
  const auto r = run_gradient_suite(seed, o.trials);
  char line[256];
  std::snprintf(line, sizeof line,
                "trials %zu\nce %.3e\nkl %.3e\nkg %.3e\ntotal %.3e\nmax relative error %.3e\n", r.trials, r.ce,
                r.kl, r.kg, r.total, r.max_error());
  out << line << (r.passed() ? "PASS" : "FAIL") << "\n";
  return r.passed() ? 0 : 2;
}

int cmd_report(const Options& o, std::ostream& out, bool ablation) {
  const RunConfig cfg = load_config(o);
  const ReportFormat format = format_for(o, cfg);
  const EvalReport report =
      ablation ? ablation_run(cfg) : base_new_protocol(cfg, cfg.methods, cfg.shots, cfg.seeds);
  std::filesystem::path path(o.out);
  if (path.is_relative() && cfg.out_dir != ".") path = std::filesystem::path(cfg.out_dir) / path;
  emit_report(report, format, path);
  out << render_report(report, format) << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt tuning lab: synthetic base-to-new experiments", "ptlab"};
  app.require_subcommand(1);
  Options o;
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Override the config seed everywhere"); };

  auto* gen = app.add_subcommand("gen-task", "Generate a synthetic few-shot task");
  gen->add_option("--config", o.config, "JSON config")->required();
  gen->add_option("--out", o.out, "Output task file")->required();
  add_seed(gen);

  auto* tr = app.add_subcommand("train", "Train prompts on a task");
  tr->add_option("--config", o.config, "JSON config")->required();
  tr->add_option("--task", o.task, "Task file")->required();
  tr->add_option("--method", o.method, "ours, coop, kgcoop or prograd");
  tr->add_option("--out", o.out, "Output checkpoint")->required();
  add_seed(tr);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a task");
  ev->add_option("--ckpt", o.ckpt, "Checkpoint file")->required();
  ev->add_option("--task", o.task, "Task file")->required();
  ev->add_option("--split", o.split, "base, new or both");
  ev->add_option("--format", o.format, "md or csv");
  ev->add_option("--out", o.out, "Also write the report here");
  ev->add_option("--config", o.config, "Warn if the checkpoint was trained with a different config");
  add_seed(ev);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--seed", o.seed, "Suite seed");
  gc->add_option("--trials", o.trials, "Number of random instances");

  auto* ab = app.add_subcommand("ablate", "Component ablation");
  ab->add_option("--config", o.config, "JSON config")->required();
  ab->add_option("--out", o.out, "Output report")->required();
  ab->add_option("--format", o.format, "md or csv (default from config)");
  add_seed(ab);

  auto* pr = app.add_subcommand("protocol", "Base-to-new protocol over methods, shots and seeds");
  pr->add_option("--config", o.config, "JSON config")->required();
  pr->add_option("--out", o.out, "Output report")->required();
  pr->add_option("--format", o.format, "md or csv (default from config)");
  add_seed(pr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_task(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out, err);
    if (gc->parsed()) return cmd_gradcheck(o, out);
    if (ab->parsed()) return cmd_report(o, out, true);
    return cmd_report(o, out, false);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const PairingError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ptlab
