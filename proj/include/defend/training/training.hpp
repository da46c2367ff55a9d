#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "defend/graph/graph.hpp"
#include "defend/losses/losses.hpp"
#include "defend/model/model.hpp"

namespace defend::training {

using ad::Reduction;
using ad::Tensor;
using losses::LossReport;
using losses::LossWeights;

enum class Variant { kFull, kNoCorr, kVanillaVgae, kNoAdversary, kWithStruct };
enum class ShufflePolicy { kPerEpoch, kFixed };

std::string to_string(Variant v);
// Accepts FULL, NO_CORR, VANILLA_VGAE, NO_ADVERSARY, WITH_STRUCT.
Variant parse_variant(const std::string& name);
std::string to_string(ShufflePolicy p);
std::string to_string(Reduction r);
Reduction parse_reduction(const std::string& name);

bool has_sensitive_head(Variant v);
bool uses_adversary(Variant v);
bool uses_correlation(Variant v);

struct TrainConfig {
  double learning_rate = 5e-3;
  std::size_t phase1_max_epochs = 100;
  std::size_t patience = 20;
  std::size_t phase2_epochs = 100;
  LossWeights weights;
  Variant variant = Variant::kFull;
  std::uint64_t seed = 0;
  ShufflePolicy shuffle_policy = ShufflePolicy::kPerEpoch;
  Reduction reduction = Reduction::kMean;
  // Dense structure reconstruction in phase 1; off gives the
  // attribute-only mode whose cost is linear in the edge count.
  bool structure_reconstruction = true;
  // Correlation constraint against sigmoid(z_s) (true) or raw z_s.
  bool corr_on_probabilities = true;
  std::size_t hidden = 64;
  std::size_t latent = 64;

  void validate() const;
  // Weights are serialized separately (see weights_to_json).
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, const std::string& path = "train");
};

nlohmann::json weights_to_json(const LossWeights& w);
// epsilon_mix is derived from the graph and is not accepted here.
LossWeights weights_from_json(const nlohmann::json& j, const std::string& path = "weights");

// Graph-derived inputs shared by every pass of a run.
struct GraphContext {
  const graph::AttributedGraph* graph = nullptr;
  graph::SparseMatrix norm_adj;
  Tensor a_dense;  // empty unless a structure term is needed
  Tensor s;        // N x 1 sensitive values
  double epsilon_mix = 0.0;

  static GraphContext prepare(const graph::AttributedGraph& g, bool dense_adjacency);
  const Tensor& x() const { return graph->attributes; }
  std::size_t n() const { return graph->n_nodes; }
};

struct EpochRecord {
  int phase = 1;
  std::size_t epoch = 0;
  LossReport loss;
  // |Pearson(o, s)| of the epoch's anomaly scores (phase 2).
  double abs_pearson_o_s = 0.0;
};

// Strict-improvement early stopping.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  // Returns true when training should stop after this epoch.
  bool update(double loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
  bool improved_ = false;
};

struct Phase1Result {
  std::vector<EpochRecord> history;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_loss = 0.0;
};

struct Phase2Result {
  std::vector<EpochRecord> history;
  std::size_t epochs_run = 0;
  Tensor scores;  // N x 1
};

model::ModelParams init_params(const GraphContext& ctx, const TrainConfig& cfg);

// Trains encoder, attribute decoder and adversary in place and restores
// the parameters of the best epoch.
Phase1Result train_phase1(const GraphContext& ctx, const TrainConfig& cfg, model::ModelParams& params);

// Recomputes the phase-1 objective at `epoch` (same noise) without updating.
LossReport phase1_objective(const GraphContext& ctx, const TrainConfig& cfg, model::ModelParams& params,
                            std::size_t epoch);

// Trains the anomaly decoder against the frozen encoder and scores nodes
// with the fixed final permutation. Throws std::logic_error if an encoder
// gradient is ever non-zero.
Phase2Result train_phase2(const GraphContext& ctx, const TrainConfig& cfg, model::ModelParams& params);

// Permutation of z_s rows used for the reported scores.
std::vector<std::size_t> final_permutation(const TrainConfig& cfg, std::size_t n);

// Scores with the current anomaly decoder and a given permutation of z_s.
Tensor score_nodes(const GraphContext& ctx, const TrainConfig& cfg, model::ModelParams& params,
                   const std::vector<std::size_t>& perm);

struct TrainedModel {
  model::ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t phase1_epochs = 0;
  std::size_t phase2_epochs = 0;
  std::size_t best_epoch = 0;
  double best_loss = 0.0;
  double epsilon_mix = 0.0;
  Tensor scores;
};

TrainedModel train(const graph::AttributedGraph& g, const TrainConfig& cfg);

// Whether a run of cfg on g needs the dense adjacency in its GraphContext.
bool needs_dense_adjacency(const graph::AttributedGraph& g, const TrainConfig& cfg);

// The part of cfg that phase 1 depends on. Configs with equal keys share
// identical phase-1 results on the same graph.
nlohmann::json phase1_key(const TrainConfig& cfg);

// Phase 2 only, starting from trained phase-1 parameters (copied).
TrainedModel train_from_phase1(const GraphContext& ctx, const TrainConfig& cfg, const model::ModelParams& phase1,
                               const Phase1Result& p1);

// ---- regularized reconstruction baseline ----

enum class Regularizer { kNone, kFairOD, kCorrelation, kHin };
std::string to_string(Regularizer r);
// Throws ConfigError listing the valid names.
Regularizer parse_regularizer(const std::string& name);

struct BaselineConfig {
  Regularizer regularizer = Regularizer::kNone;
  double lambda = 1.0;
  double gamma_adcg = 0.0;
  std::size_t epochs = 100;
  double learning_rate = 5e-3;
  bool structure_reconstruction = true;
  std::size_t hidden = 64;
  std::size_t latent = 64;

  void validate() const;
  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j, const std::string& path = "baseline");
};

struct BaselineModel {
  model::BaselineParams params;
  std::vector<EpochRecord> history;
  Tensor scores;
};

// base_scores (N x 1) are required by fairod and by hin with gamma_adcg > 0.
BaselineModel train_baseline_with_regularizer(const graph::AttributedGraph& g, const BaselineConfig& cfg,
                                              std::uint64_t seed, Reduction reduction = Reduction::kMean,
                                              const Tensor* base_scores = nullptr);

}  // namespace defend::training
