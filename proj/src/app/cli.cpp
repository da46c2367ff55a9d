#include <CLI11.hpp>

#include <iostream>

#include "defend/app/commands.hpp"
#include "defend/errors.hpp"
#include "defend/graph/dataset.hpp"
#include "defend/io.hpp"
#include "defend/model/checkpoint.hpp"
#include "defend/rng.hpp"
#include "defend/synth/generator.hpp"

namespace defend::app {

using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string reduction;
  std::size_t jobs = 0;
  std::string data;
  std::string reg;
  std::string run;
};

RunConfig resolve(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (!o.reduction.empty()) rc.train.reduction = training::parse_reduction(o.reduction);
  if (!o.out.empty()) rc.output_dir = o.out;
  rc.validate();
  return rc;
}

std::size_t jobs_of(const Options& o) { return o.jobs ? o.jobs : default_jobs(); }

// The dataset at --data, or one generated from the generator section.
graph::AttributedGraph dataset(const Options& o, const RunConfig& rc, std::ostream& err) {
  if (!o.data.empty()) return graph::load_dataset(o.data);
  err << "no --data given; generating the dataset from the generator section\n";
  return synth::generate_graph(rc.generator).graph;
}

void print_eval(std::ostream& out, const RunSummary& s) {
  if (!s.report) {
    out << "unlabeled dataset; |pearson(o, s)|=" << format_double(s.abs_pearson_o_s) << "\n";
    return;
  }
  const auto& r = *s.report;
  out << "auc_roc=" << format_double(r.auc_roc) << " auc_pr=" << format_double(r.auc_pr)
      << " delta_dp=" << format_double(r.delta_dp)
      << " delta_eo=" << (r.delta_eo ? format_double(*r.delta_eo) : std::string("n/a")) << " k=" << r.k << "\n";
}

int cmd_generate(const Options& o, std::ostream& out, std::ostream&) {
  RunConfig rc = resolve(o);
  if (o.seed_given) rc.generator.seed = o.seed;
  rc.generator.validate();
  const auto gen = synth::generate_graph(rc.generator);
  const auto& g = gen.graph;
  const fs::path dir = rc.output_dir;
  graph::save_dataset(g, dir, {rc.generator.seed, rc.generator.to_json()});
  std::size_t minority = 0, anomalies = 0;
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    minority += g.sensitive[i];
    anomalies += (*g.labels)[i];
  }
  const double n = static_cast<double>(g.n_nodes);
  out << "N=" << g.n_nodes << " E=" << g.n_edges() << " d=" << g.n_attrs()
      << " gamma_G=" << format_double(minority / n) << " gamma_A=" << format_double(anomalies / n) << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(o);
  if (o.seed_given) rc.train.seed = o.seed;
  const auto g = dataset(o, rc, err);
  Phase1Cache cache(g);
  const auto model = cache.train(rc.train);
  const auto summary = summarize(g, model.scores, rc.eval.contamination, rc.train.seed);
  write_run(rc.output_dir, rc, g, model, summary);
  out << training::to_string(rc.train.variant) << " seed " << rc.train.seed << ": ";
  print_eval(out, summary);
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const fs::path run = o.run.empty() ? fs::path(o.out) : fs::path(o.run);
  if (run.empty()) throw ConfigError("eval: give the run directory with --run");
  Options inner = o;
  inner.config = (run / "config.json").string();
  inner.out.clear();
  inner.reduction.clear();
  const RunConfig rc = resolve(inner);
  const auto g = dataset(o, rc, err);
  training::TrainConfig cfg = rc.train;
  const auto ctx = training::GraphContext::prepare(g, training::needs_dense_adjacency(g, cfg));
  auto params = training::init_params(ctx, cfg);
  if (cfg.variant == training::Variant::kWithStruct) {
    Rng rng(0);
    params.anomaly_structure = model::Linear::glorot(cfg.hidden, cfg.hidden, rng);
  }
  const auto info = model::load_checkpoint(run / "checkpoint.json", model::parameters(params, model::Part::kAll));
  if (info.config_hash != rc.hash()) {
    throw DataError((run / "checkpoint.json").string() + ": config hash does not match config.json");
  }
  const auto scores = training::score_nodes(ctx, cfg, params, training::final_permutation(cfg, g.n_nodes));
  const auto summary = summarize(g, scores, rc.eval.contamination, cfg.seed);
  const fs::path dest = o.out.empty() ? run : fs::path(o.out);
  fs::create_directories(dest);
  json report = {{"run", run.string()},
                 {"variant", training::to_string(cfg.variant)},
                 {"seed", cfg.seed},
                 {"eval", summary.report ? metrics::to_json(*summary.report) : json(nullptr)},
                 {"abs_pearson_o_s", summary.abs_pearson_o_s}};
  write_file_atomic(dest / "eval.json", report.dump(2) + "\n");
  print_eval(out, summary);
  return 0;
}

int worst_code(int a, int b) { return a == 3 || b == 3 ? 3 : std::max(a, b); }

int cmd_ablate(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(o);
  if (o.seed_given) rc.seeds = {o.seed};
  const auto g = dataset(o, rc, err);
  const fs::path dir = rc.output_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json", rc.to_json().dump(2) + "\n");
  err << "ablation: " << ablation_variants().size() << " variants x " << rc.seeds.size() << " seeds\n";
  const auto rows = run_ablation(g, rc, jobs_of(o), [&](const std::vector<RunRow>& done) {
    write_file_atomic(dir / "ablation_table.csv", ablation_csv(done));
    const auto& last = done.back();
    err << "  " << done.size() << " done (" << last.label << " seed " << last.seed << ")\n";
  });
  write_file_atomic(dir / "ablation_table.csv", ablation_csv(rows));
  out << ablation_csv(rows);
  int code = 0;
  for (const auto& r : rows) code = worst_code(code, r.exit_code);
  return code;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  json doc = json::object();
  if (!o.config.empty()) {
    try {
      doc = json::parse(read_file(o.config));
    } catch (const json::parse_error& e) {
      throw ConfigError(o.config + ": invalid JSON (" + e.what() + ")");
    }
  }
  if (!o.reduction.empty()) {
    if (!doc.contains("train")) doc["train"] = json::object();
    doc["train"]["reduction"] = o.reduction;
  }
  SweepSpec spec = SweepSpec::from_json(doc);
  if (!o.out.empty()) spec.base.output_dir = o.out;
  if (o.seed_given) spec.base.seeds = {o.seed};
  const auto g = dataset(o, spec.base, err);
  const fs::path dir = spec.base.output_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json", spec.to_json().dump(2) + "\n");
  err << "sweep: " << spec.size() << " points x " << spec.base.seeds.size()
      << " seeds = " << spec.size() * spec.base.seeds.size() << " runs\n";
  const auto rows = run_sweep(g, spec, jobs_of(o), [&](const std::vector<SweepRow>& done) {
    write_file_atomic(dir / "tradeoff.csv", tradeoff_csv(spec, done));
    err << "  " << done.size() << " done\n";
  });
  write_file_atomic(dir / "tradeoff.csv", tradeoff_csv(spec, rows));
  const auto front = pareto_front(rows);
  write_file_atomic(dir / "pareto.csv", pareto_csv(spec, front));
  out << pareto_csv(spec, front);
  int code = 0;
  for (const auto& r : rows) code = worst_code(code, r.run.exit_code);
  return code;
}

int cmd_baseline(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(o);
  if (!o.reg.empty()) rc.baseline.regularizer = training::parse_regularizer(o.reg);
  if (o.seed_given) rc.train.seed = o.seed;
  const auto g = dataset(o, rc, err);
  const fs::path dir = rc.output_dir;
  const auto reg = rc.baseline.regularizer;
  const bool needs_base = reg == training::Regularizer::kFairOD ||
                          (reg == training::Regularizer::kHin && rc.baseline.gamma_adcg > 0.0);
  std::optional<ad::Tensor> base;
  if (needs_base) {
    if (!fs::exists(dir / "base_scores.csv")) {
      throw ConfigError("baseline: " + training::to_string(reg) + " needs base scores in " + dir.string() +
                        "; run `defend baseline --reg none` with the same --out first");
    }
    base = read_scores_csv(dir / "base_scores.csv", g.n_nodes);
  }
  const auto model = training::train_baseline_with_regularizer(g, rc.baseline, rc.train.seed, rc.train.reduction,
                                                               base ? &*base : nullptr);
  const auto summary = summarize(g, model.scores, rc.eval.contamination, rc.train.seed);
  const auto sens = graph::as_column(g.sensitive);
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json", rc.to_json().dump(2) + "\n");
  write_file_atomic(dir / "scores.csv", scores_csv(g, model.scores));
  if (reg == training::Regularizer::kNone) write_file_atomic(dir / "base_scores.csv", scores_csv(g, model.scores));
  write_file_atomic(dir / "history.csv", history_csv(model.history, false));
  json report = {{"regularizer", training::to_string(reg)},
                 {"lambda", rc.baseline.lambda},
                 {"gamma_adcg", rc.baseline.gamma_adcg},
                 {"seed", rc.train.seed},
                 {"eval", summary.report ? metrics::to_json(*summary.report) : json(nullptr)},
                 {"abs_pearson_o_s", summary.abs_pearson_o_s},
                 {"abs_cosine_o_s", std::abs(losses::cosine(model.scores.data(), sens.data()))},
                 {"timestamp", utc_timestamp()}};
  write_file_atomic(dir / "report.json", report.dump(2) + "\n");
  out << training::to_string(reg) << " seed " << rc.train.seed << ": ";
  print_eval(out, summary);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fair graph anomaly detection with disentangled representations", "defend"};
  app.fallthrough();
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "JSON run config (sweep spec for sweep)");
  app.add_option("--out", o.out, "output directory (overrides output_dir)");
  auto* seed = app.add_option("--seed", o.seed, "seed override");
  app.add_option("--reduction", o.reduction, "loss reduction")->check(CLI::IsMember({"mean", "sum"}));
  app.add_option("--jobs", o.jobs, "worker threads (default: physical cores)")->check(CLI::PositiveNumber);

  auto* generate = app.add_subcommand("generate", "write a synthetic biased dataset");
  auto* train = app.add_subcommand("train", "train one model and write checkpoint, history and report");
  auto* eval = app.add_subcommand("eval", "rescore a trained run and evaluate it");
  auto* ablate = app.add_subcommand("ablate", "all variants over the seed list");
  auto* sweep = app.add_subcommand("sweep", "grid over named config parameters");
  auto* baseline = app.add_subcommand("baseline", "regularized reconstruction baseline");
  for (auto* sub : {train, eval, ablate, sweep, baseline}) {
    sub->add_option("--data", o.data, "dataset directory (default: generate from config)");
  }
  eval->add_option("--run", o.run, "run directory written by train");
  baseline->add_option("--reg", o.reg, "none, fairod, correlation or hin");

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return e.get_exit_code() == 0 ? 0 : 2;
  }
  o.seed_given = seed->count() > 0;

  try {
    if (*generate) return cmd_generate(o, out, err);
    if (*train) return cmd_train(o, out, err);
    if (*eval) return cmd_eval(o, out, err);
    if (*ablate) return cmd_ablate(o, out, err);
    if (*sweep) return cmd_sweep(o, out, err);
    if (*baseline) return cmd_baseline(o, out, err);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace defend::app
