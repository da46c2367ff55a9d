#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "defend/graph/graph.hpp"
#include "defend/rng.hpp"

namespace defend::synth {

// Biased attributed-graph benchmark. Defaults follow the shape of the
// social-network benchmarks (minority group ~15%, anomalies ~8%).
struct GeneratorConfig {
  std::size_t n_nodes = 2000;
  std::size_t n_attrs = 32;
  double minority_ratio = 0.15;
  // Fraction of edges joining nodes with the same sensitive value.
  double homophily = 0.9;
  double avg_degree = 10.0;
  // Shift of s=1 nodes along a fixed unit direction u.
  double bias_strength = 3.0;
  double anomaly_ratio = 0.08;
  // Per-node selection weight for anomalies: skew for s=1, 1-skew for s=0.
  // 0.5 gives equal anomaly rates in both groups.
  double anomaly_group_skew = 0.7;
  double structural_fraction = 0.5;
  std::size_t clique_size = 10;
  std::uint64_t seed = 0;
  // Latent attribute clusters; within the sensitive group chosen for an
  // edge, the partner shares the source's cluster with probability
  // community_affinity.
  std::size_t n_clusters = 5;
  double community_affinity = 0.8;
  double noise_std = 0.5;
  std::size_t contextual_pool_size = 50;

  // Throws ConfigError("<field>: ...") on the first invalid field.
  void validate() const;

  nlohmann::json to_json() const;
  // Unknown keys are rejected; missing keys keep their defaults.
  static GeneratorConfig from_json(const nlohmann::json& j, const std::string& path = "generator");
};

struct InjectionReport {
  std::vector<std::size_t> structural_anomaly_ids;
  std::vector<std::size_t> contextual_anomaly_ids;
  // Indexed by sensitive value.
  std::array<std::size_t, 2> per_group_anomaly_counts{0, 0};
  // Unit direction along which s=1 attributes are shifted.
  std::vector<double> bias_direction;
};

struct GeneratedGraph {
  graph::AttributedGraph graph;
  InjectionReport report;
};

GeneratedGraph generate_graph(const GeneratorConfig& cfg);

// Connects each consecutive block of clique_size ids into a clique and
// labels the members anomalous. ids.size() must be a multiple of clique_size.
void inject_structural_anomalies(graph::AttributedGraph& g, std::span<const std::size_t> ids,
                                 std::size_t clique_size);
// Picks `count` unlabeled nodes uniformly, then as above. Returns the ids.
std::vector<std::size_t> inject_structural_anomalies(graph::AttributedGraph& g, std::size_t count,
                                                     std::size_t clique_size, Rng& rng);

// For each id, samples pool_size other nodes and copies the original
// attribute row farthest (Euclidean) from the node's own row.
void inject_contextual_anomalies(graph::AttributedGraph& g, std::span<const std::size_t> ids,
                                 std::size_t pool_size, Rng& rng);
std::vector<std::size_t> inject_contextual_anomalies(graph::AttributedGraph& g, std::size_t count,
                                                     std::size_t pool_size, Rng& rng);

// Fraction of undirected edges whose endpoints share the sensitive value.
double same_group_edge_fraction(const graph::AttributedGraph& g);

}  // namespace defend::synth
