#include "defend/app/commands.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "defend/errors.hpp"
#include "defend/graph/dataset.hpp"
#include "defend/io.hpp"
#include "defend/losses/losses.hpp"
#include "defend/model/checkpoint.hpp"

namespace defend::app {

using nlohmann::json;
using training::TrainConfig;
using training::TrainedModel;
using training::Variant;

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

std::size_t default_jobs() {
  // Count distinct (physical id, core id) pairs; fall back to threads.
  std::ifstream in("/proc/cpuinfo");
  std::set<std::pair<std::string, std::string>> cores;
  std::string line, physical, core;
  while (std::getline(in, line)) {
    auto value = [&] { return line.substr(line.find(':') + 1); };
    if (line.rfind("physical id", 0) == 0) physical = value();
    if (line.rfind("core id", 0) == 0) {
      core = value();
      cores.emplace(physical, core);
    }
  }
  if (!cores.empty()) return cores.size();
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---- phase-1 sharing ----

struct Phase1Cache::Entry {
  std::mutex mu;
  bool done = false;
  model::ModelParams params;
  training::Phase1Result result;
  std::exception_ptr error;
};

const training::GraphContext& Phase1Cache::context(bool dense) {
  auto& slot = dense ? dense_ : sparse_;
  if (!slot) slot = std::make_unique<training::GraphContext>(training::GraphContext::prepare(graph_, dense));
  return *slot;
}

TrainedModel Phase1Cache::train(const TrainConfig& cfg) {
  cfg.validate();
  std::shared_ptr<Entry> entry;
  const training::GraphContext* ctx = nullptr;
  {
    std::lock_guard lock(mu_);
    auto& e = entries_[training::phase1_key(cfg).dump()];
    if (!e) e = std::make_shared<Entry>();
    entry = e;
    ctx = &context(training::needs_dense_adjacency(graph_, cfg));
  }
  {
    std::lock_guard lock(entry->mu);
    if (!entry->done) {
      try {
        entry->params = training::init_params(*ctx, cfg);
        entry->result = training::train_phase1(*ctx, cfg, entry->params);
      } catch (...) {
        entry->error = std::current_exception();
      }
      entry->done = true;
    }
  }
  if (entry->error) std::rethrow_exception(entry->error);
  return training::train_from_phase1(*ctx, cfg, entry->params, entry->result);
}

RunSummary summarize(const graph::AttributedGraph& g, const ad::Tensor& scores,
                     std::optional<double> contamination, std::uint64_t seed) {
  RunSummary s;
  const auto sens = graph::as_column(g.sensitive);
  s.abs_pearson_o_s = std::abs(losses::pearson(scores.data(), sens.data()));
  if (g.labels) s.report = metrics::evaluate(scores.data(), *g.labels, g.sensitive, contamination, seed);
  return s;
}

// ---- files ----

namespace {

std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json summary_json(const RunSummary& s) {
  return {{"eval", s.report ? metrics::to_json(*s.report) : json(nullptr)}, {"abs_pearson_o_s", s.abs_pearson_o_s}};
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DataError*>(&e) ||
      dynamic_cast<const PreconditionError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const DomainError*>(&e)) {
    return 2;
  }
  return 1;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunRow execute(Phase1Cache& cache, const graph::AttributedGraph& g, const RunConfig& rc, std::uint64_t seed,
               std::string label) {
  RunRow row;
  row.label = std::move(label);
  row.seed = seed;
  try {
    const auto model = cache.train(train_config_for(rc, seed));
    row.result = summarize(g, model.scores, rc.eval.contamination, seed);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.exit_code = exit_code_for(e);
  }
  return row;
}

}  // namespace

std::string history_csv(const std::vector<training::EpochRecord>& history, bool with_corr) {
  std::string out = "phase,epoch,rec_x,rec_a,kl,dis,pre,adv,";
  out += with_corr ? "corr,total,abs_pearson_o_s\n" : "total,abs_pearson_o_s\n";
  for (const auto& h : history) {
    const auto& l = h.loss;
    out += std::to_string(h.phase) + "," + std::to_string(h.epoch) + "," + num(l.rec_x) + "," + num(l.rec_a) + "," +
           num(l.kl) + "," + num(l.dis) + "," + num(l.pre) + "," + num(l.adv) + ",";
    if (with_corr) out += (h.phase == 2 ? num(l.corr) : std::string()) + ",";
    out += num(l.total) + "," + (h.phase == 2 ? num(h.abs_pearson_o_s) : std::string()) + "\n";
  }
  return out;
}

std::string scores_csv(const graph::AttributedGraph& g, const ad::Tensor& scores) {
  std::string out = "id,score,s,y\n";
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    out += std::to_string(i) + "," + format_double(scores[i]) + "," + std::to_string(g.sensitive[i]) + "," +
           (g.labels ? std::to_string((*g.labels)[i]) : std::string()) + "\n";
  }
  return out;
}

ad::Tensor read_scores_csv(const fs::path& path, std::size_t n) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line.rfind("id,score", 0) != 0) throw DataError(path.string() + ": expected header id,score,...");
  ad::Tensor out({n, 1});
  std::vector<bool> seen(n, false);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::string where = path.string() + " row " + std::to_string(row);
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos) throw DataError(where + ": expected id,score");
    const long long id = parse_int(line.substr(0, c1), where + " id");
    if (id < 0 || static_cast<std::size_t>(id) >= n || seen[id]) throw DataError(where + ": bad or repeated id");
    out[id] = parse_double(line.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1),
                           where + " score");
    seen[id] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw DataError(path.string() + ": expected one score per node (" + std::to_string(n) + ")");
  }
  return out;
}

void write_run(const fs::path& dir, const RunConfig& rc, const graph::AttributedGraph& g, const TrainedModel& model,
               const RunSummary& summary) {
  fs::create_directories(dir);
  const json config = rc.to_json();
  const auto hash = rc.hash();
  const auto& tc = rc.train;
  const json meta = {{"variant", training::to_string(tc.variant)},
                     {"seed", tc.seed},
                     {"phase1_epochs", model.phase1_epochs},
                     {"phase2_epochs", model.phase2_epochs},
                     {"best_epoch", model.best_epoch},
                     {"epsilon_mix", model.epsilon_mix}};
  write_json(dir / "config.json", config);
  auto params = model.params;
  model::save_checkpoint(dir / "checkpoint.json", model::parameters(params, model::Part::kAll), hash, meta);
  write_file_atomic(dir / "history.csv", history_csv(model.history, training::uses_correlation(tc.variant)));
  write_file_atomic(dir / "scores.csv", scores_csv(g, model.scores));
  json report = meta;
  report["best_loss"] = model.best_loss;
  report["config_hash"] = std::to_string(hash);
  report.update(summary_json(summary));
  report["timestamp"] = utc_timestamp();
  write_json(dir / "report.json", report);
}

// ---- ablation ----

std::vector<Variant> ablation_variants() {
  return {Variant::kFull, Variant::kNoCorr, Variant::kVanillaVgae, Variant::kNoAdversary, Variant::kWithStruct};
}

std::vector<RunRow> run_ablation(const graph::AttributedGraph& g, const RunConfig& rc, std::size_t jobs,
                                 const std::function<void(const std::vector<RunRow>&)>& on_progress) {
  const auto variants = ablation_variants();
  const std::size_t n = variants.size() * rc.seeds.size();
  std::vector<std::optional<RunRow>> slots(n);
  Phase1Cache cache(g);
  std::mutex mu;
  parallel_for(n, jobs, [&](std::size_t t) {
    // Seed-major order keeps the shared phase 1 of a seed close together.
    RunConfig v = rc;
    v.train.variant = variants[t % variants.size()];
    RunRow row = execute(cache, g, v, rc.seeds[t / variants.size()], training::to_string(v.train.variant));
    std::lock_guard lock(mu);
    slots[t] = std::move(row);
    if (on_progress) {
      std::vector<RunRow> done;
      for (const auto& s : slots) {
        if (s) done.push_back(*s);
      }
      on_progress(done);
    }
  });
  // Variant-major output order.
  std::vector<RunRow> rows;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    for (std::size_t si = 0; si < rc.seeds.size(); ++si) rows.push_back(*slots[si * variants.size() + vi]);
  }
  return rows;
}

namespace {

struct MeanStd {
  double mean = std::nan("");
  double std = std::nan("");
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  double s = 0.0;
  for (double x : v) s += x;
  m.mean = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return m;
}

std::string metric_cells(const RunRow& r) {
  if (!r.result || !r.result->report) return ",,,";
  const auto& e = *r.result->report;
  return num(e.auc_roc) + "," + num(e.auc_pr) + "," + num(e.delta_dp) + "," +
         (e.delta_eo ? num(*e.delta_eo) : std::string());
}

std::string status(const RunRow& r) {
  if (!r.error.empty()) return csv_field("failed: " + r.error);
  return r.result && r.result->report ? "ok" : "unlabeled";
}

}  // namespace

std::string ablation_csv(const std::vector<RunRow>& rows) {
  std::string out = "variant,seed,auc_roc,auc_pr,delta_dp,delta_eo,status\n";
  std::vector<std::string> order;
  for (const auto& r : rows) {
    out += r.label + "," + std::to_string(r.seed) + "," + metric_cells(r) + "," + status(r) + "\n";
    if (std::find(order.begin(), order.end(), r.label) == order.end()) order.push_back(r.label);
  }
  for (const auto& label : order) {
    std::array<std::vector<double>, 4> cols;
    std::size_t failed = 0;
    for (const auto& r : rows) {
      if (r.label != label) continue;
      if (!r.result || !r.result->report) {
        failed += !r.error.empty();
        continue;
      }
      const auto& e = *r.result->report;
      cols[0].push_back(e.auc_roc);
      cols[1].push_back(e.auc_pr);
      cols[2].push_back(e.delta_dp);
      if (e.delta_eo) cols[3].push_back(*e.delta_eo);
    }
    out += label + ",mean±std";
    for (const auto& c : cols) {
      const auto m = mean_std(c);
      out += "," + (c.empty() ? std::string() : num(m.mean) + "±" + num(m.std));
    }
    out += failed ? "," + std::to_string(failed) + " failed\n" : ",summary\n";
  }
  return out;
}

// ---- sweep ----

std::vector<SweepRow> run_sweep(const graph::AttributedGraph& g, const SweepSpec& spec, std::size_t jobs,
                                const std::function<void(const std::vector<SweepRow>&)>& on_progress) {
  for (const auto& [name, _] : spec.axes) {
    if (name.rfind("generator.", 0) == 0 || name == "seeds" || name == "output_dir") {
      throw ConfigError("axes." + name + ": not sweepable (the dataset and seed list are fixed for a sweep)");
    }
  }
  const auto points = spec.points();
  std::vector<RunConfig> configs;
  for (const auto& p : points) configs.push_back(spec.at(p));
  const auto& seeds = spec.base.seeds;
  const std::size_t n = points.size() * seeds.size();
  std::vector<std::optional<SweepRow>> slots(n);
  Phase1Cache cache(g);
  std::mutex mu;
  parallel_for(n, jobs, [&](std::size_t t) {
    // Seed-major so every point of a seed reuses one phase 1 where possible.
    const std::size_t pi = t % points.size(), si = t / points.size();
    SweepRow row;
    row.point = pi;
    row.values = points[pi];
    row.run = execute(cache, g, configs[pi], seeds[si], std::to_string(pi));
    std::lock_guard lock(mu);
    slots[t] = std::move(row);
    if (on_progress) {
      std::vector<SweepRow> done;
      for (const auto& s : slots) {
        if (s) done.push_back(*s);
      }
      on_progress(done);
    }
  });
  std::vector<SweepRow> rows;
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    for (std::size_t si = 0; si < seeds.size(); ++si) rows.push_back(*slots[si * points.size() + pi]);
  }
  return rows;
}

std::string tradeoff_csv(const SweepSpec& spec, const std::vector<SweepRow>& rows) {
  std::string out = "point";
  for (const auto& axis : spec.axes) out += "," + csv_field(axis.first);
  out += ",seed,auc_roc,auc_pr,delta_dp,delta_eo,abs_pearson_o_s,status\n";
  for (const auto& r : rows) {
    out += std::to_string(r.point);
    for (const auto& v : r.values) out += "," + csv_field(v.is_string() ? v.get<std::string>() : v.dump());
    out += "," + std::to_string(r.run.seed) + "," + metric_cells(r.run) + "," +
           (r.run.result ? num(r.run.result->abs_pearson_o_s) : std::string()) + "," + status(r.run) + "\n";
  }
  return out;
}

std::vector<ParetoPoint> pareto_front(const std::vector<SweepRow>& rows) {
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_point;
  std::map<std::size_t, std::vector<json>> values;
  for (const auto& r : rows) {
    if (!r.run.result || !r.run.result->report) continue;
    auto& [auc, eo] = by_point[r.point];
    auc.push_back(r.run.result->report->auc_roc);
    if (r.run.result->report->delta_eo) eo.push_back(*r.run.result->report->delta_eo);
    values[r.point] = r.values;
  }
  std::vector<ParetoPoint> all;
  for (const auto& [p, cols] : by_point) {
    if (cols.second.empty()) continue;
    all.push_back({p, values[p], median(cols.first), median(cols.second)});
  }
  std::vector<ParetoPoint> front;
  for (const auto& a : all) {
    const bool dominated = std::any_of(all.begin(), all.end(), [&](const ParetoPoint& b) {
      return b.auc_roc >= a.auc_roc && b.delta_eo <= a.delta_eo && (b.auc_roc > a.auc_roc || b.delta_eo < a.delta_eo);
    });
    if (!dominated) front.push_back(a);
  }
  std::sort(front.begin(), front.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    return a.auc_roc != b.auc_roc ? a.auc_roc > b.auc_roc : a.point < b.point;
  });
  return front;
}

std::string pareto_csv(const SweepSpec& spec, const std::vector<ParetoPoint>& front) {
  std::string out = "point";
  for (const auto& axis : spec.axes) out += "," + csv_field(axis.first);
  out += ",auc_roc,delta_eo\n";
  for (const auto& p : front) {
    out += std::to_string(p.point);
    for (const auto& v : p.values) out += "," + csv_field(v.is_string() ? v.get<std::string>() : v.dump());
    out += "," + num(p.auc_roc) + "," + num(p.delta_eo) + "\n";
  }
  return out;
}

}  // namespace defend::app
