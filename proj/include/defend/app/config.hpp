#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "defend/synth/generator.hpp"
#include "defend/training/training.hpp"

namespace defend::app {

struct EvalOptions {
  // Fraction flagged as anomalous; the true anomaly rate when absent.
  std::optional<double> contamination;
};

// One JSON document with sections generator, train, weights, baseline,
// eval, seeds and output_dir. Missing sections keep their defaults;
// unknown keys anywhere are rejected.
struct RunConfig {
  synth::GeneratorConfig generator;
  training::TrainConfig train;
  training::BaselineConfig baseline;
  EvalOptions eval;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string output_dir = "runs";

  void validate() const;
  nlohmann::json to_json() const;
  // Checkpoint hash of everything but output_dir, so a run directory can move.
  std::uint64_t hash() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

// Training config for one seed: weights and seed folded in.
training::TrainConfig train_config_for(const RunConfig& rc, std::uint64_t seed);

// Shipped beta grids; the sum-reduction grid is the literal one used with
// sum-reduced losses on large graphs.
std::vector<double> default_beta_grid(training::Reduction reduction);

// Base config plus named axes. Axis names are dotted paths into the run
// config document (e.g. "weights.beta", "train.learning_rate").
struct SweepSpec {
  RunConfig base;
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;

  // Cartesian product in row-major order over axes (last axis fastest).
  std::vector<std::vector<nlohmann::json>> points() const;
  std::size_t size() const;
  // Base document with one point's values substituted.
  RunConfig at(const std::vector<nlohmann::json>& point) const;

  nlohmann::json to_json() const;
  // A document without "axes" sweeps weights.beta over the default grid.
  static SweepSpec from_json(const nlohmann::json& j);
};

}  // namespace defend::app
