#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "defend/app/config.hpp"
#include "defend/graph/graph.hpp"
#include "defend/metrics/metrics.hpp"
#include "defend/training/training.hpp"

namespace defend::app {

namespace fs = std::filesystem;

// Runs fn(0..n-1) on up to `jobs` threads. fn must not throw.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// Physical cores when known, else hardware threads, at least 1.
std::size_t default_jobs();

// Shares phase-1 training between configs with the same phase1_key on one
// graph. Safe to call from several threads; each key is trained once.
class Phase1Cache {
 public:
  explicit Phase1Cache(const graph::AttributedGraph& g) : graph_(g) {}

  // Equivalent to training::train(g, cfg).
  training::TrainedModel train(const training::TrainConfig& cfg);

 private:
  struct Entry;
  const training::GraphContext& context(bool dense);

  const graph::AttributedGraph& graph_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  std::unique_ptr<training::GraphContext> sparse_, dense_;
};

struct RunSummary {
  std::optional<metrics::EvalReport> report;  // empty when the graph is unlabeled
  double abs_pearson_o_s = 0.0;
};

RunSummary summarize(const graph::AttributedGraph& g, const ad::Tensor& scores,
                     std::optional<double> contamination, std::uint64_t seed);

// ISO-8601 UTC, second resolution.
std::string utc_timestamp();

// ---- train ----

// Writes config.json, checkpoint.json, history.csv, scores.csv and
// report.json into dir.
void write_run(const fs::path& dir, const RunConfig& rc, const graph::AttributedGraph& g,
               const training::TrainedModel& model, const RunSummary& summary);

// Column order: phase,epoch,rec_x,rec_a,kl,dis,pre,adv[,corr],total,abs_pearson_o_s.
// The corr column is present only for variants that use the constraint.
std::string history_csv(const std::vector<training::EpochRecord>& history, bool with_corr);

// Column order: id,score,s,y.
std::string scores_csv(const graph::AttributedGraph& g, const ad::Tensor& scores);
ad::Tensor read_scores_csv(const fs::path& path, std::size_t n);

// ---- ablate ----

struct RunRow {
  std::string label;  // variant name or sweep point index
  std::uint64_t seed = 0;
  std::optional<RunSummary> result;
  std::string error;  // non-empty when the run failed
  int exit_code = 0;
};

std::vector<training::Variant> ablation_variants();

std::vector<RunRow> run_ablation(const graph::AttributedGraph& g, const RunConfig& rc, std::size_t jobs,
                                 const std::function<void(const std::vector<RunRow>&)>& on_progress = {});

// Header variant,seed,auc_roc,auc_pr,delta_dp,delta_eo,status. After the
// data rows, one summary row per variant with seed "mean±std" and each
// metric cell formatted as mean±std (sample standard deviation).
std::string ablation_csv(const std::vector<RunRow>& rows);

// ---- sweep ----

struct SweepRow {
  std::size_t point = 0;
  std::vector<nlohmann::json> values;
  RunRow run;
};

std::vector<SweepRow> run_sweep(const graph::AttributedGraph& g, const SweepSpec& spec, std::size_t jobs,
                                const std::function<void(const std::vector<SweepRow>&)>& on_progress = {});

// Header point,<axis names>,seed,auc_roc,auc_pr,delta_dp,delta_eo,abs_pearson_o_s,status.
std::string tradeoff_csv(const SweepSpec& spec, const std::vector<SweepRow>& rows);

struct ParetoPoint {
  std::size_t point = 0;
  std::vector<nlohmann::json> values;
  double auc_roc = 0.0;   // median over seeds
  double delta_eo = 0.0;  // median over seeds with a defined value
};

// Per-point medians, reduced to the points no other point beats on both
// auc_roc (higher) and delta_eo (lower). Sorted by auc_roc descending.
std::vector<ParetoPoint> pareto_front(const std::vector<SweepRow>& rows);

// Header point,<axis names>,auc_roc,delta_eo.
std::string pareto_csv(const SweepSpec& spec, const std::vector<ParetoPoint>& front);

// ---- entry point ----

// Parses argv and runs one subcommand. Returns the process exit code:
// 0 success, 2 configuration or input error, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace defend::app
