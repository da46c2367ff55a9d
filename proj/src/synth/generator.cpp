#include "defend/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "defend/errors.hpp"
#include "defend/json_fields.hpp"

namespace defend::synth {

using graph::AttributedGraph;
using graph::Edge;

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError("generator." + field + ": " + msg);
  };
  if (n_nodes < 2) fail("n_nodes", "must be at least 2");
  if (n_attrs < 1) fail("n_attrs", "must be at least 1");
  if (!(minority_ratio > 0.0 && minority_ratio <= 0.5)) fail("minority_ratio", "must be in (0, 0.5]");
  if (!(homophily >= 0.0 && homophily <= 1.0)) fail("homophily", "must be in [0, 1]");
  if (!(avg_degree > 0.0) || avg_degree >= static_cast<double>(n_nodes - 1)) {
    fail("avg_degree", "must be positive and below n_nodes - 1");
  }
  if (!(bias_strength >= 0.0) || !std::isfinite(bias_strength)) fail("bias_strength", "must be >= 0");
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 0.5)) fail("anomaly_ratio", "must be in (0, 0.5)");
  if (!(anomaly_group_skew >= 0.0 && anomaly_group_skew <= 1.0)) {
    fail("anomaly_group_skew", "must be in [0, 1]");
  }
  if (!(structural_fraction >= 0.0 && structural_fraction <= 1.0)) {
    fail("structural_fraction", "must be in [0, 1]");
  }
  if (clique_size < 3) fail("clique_size", "must be at least 3");
  if (clique_size > n_nodes) fail("clique_size", "must not exceed n_nodes");
  if (n_clusters < 1) fail("n_clusters", "must be at least 1");
  if (!(community_affinity >= 0.0 && community_affinity <= 1.0)) {
    fail("community_affinity", "must be in [0, 1]");
  }
  if (!(noise_std >= 0.0)) fail("noise_std", "must be >= 0");
  if (contextual_pool_size < 2) fail("contextual_pool_size", "must be at least 2");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"n_nodes", n_nodes},
          {"n_attrs", n_attrs},
          {"minority_ratio", minority_ratio},
          {"homophily", homophily},
          {"avg_degree", avg_degree},
          {"bias_strength", bias_strength},
          {"anomaly_ratio", anomaly_ratio},
          {"anomaly_group_skew", anomaly_group_skew},
          {"structural_fraction", structural_fraction},
          {"clique_size", clique_size},
          {"seed", seed},
          {"n_clusters", n_clusters},
          {"community_affinity", community_affinity},
          {"noise_std", noise_std},
          {"contextual_pool_size", contextual_pool_size}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j, const std::string& path) {
  GeneratorConfig c;
  JsonFields f(j, path);
  f.read("n_nodes", c.n_nodes);
  f.read("n_attrs", c.n_attrs);
  f.read("minority_ratio", c.minority_ratio);
  f.read("homophily", c.homophily);
  f.read("avg_degree", c.avg_degree);
  f.read("bias_strength", c.bias_strength);
  f.read("anomaly_ratio", c.anomaly_ratio);
  f.read("anomaly_group_skew", c.anomaly_group_skew);
  f.read("structural_fraction", c.structural_fraction);
  f.read("clique_size", c.clique_size);
  f.read("seed", c.seed);
  f.read("n_clusters", c.n_clusters);
  f.read("community_affinity", c.community_affinity);
  f.read("noise_std", c.noise_std);
  f.read("contextual_pool_size", c.contextual_pool_size);
  f.finish();
  return c;
}

namespace {

std::uint64_t edge_key(std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
}

// Weighted sampling without replacement (Efraimidis-Spirakis keys).
std::vector<std::size_t> weighted_sample(const std::vector<double>& weights, std::size_t k, Rng& rng) {
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double u = rng.uniform();
    if (weights[i] > 0.0) keys.emplace_back(std::log(1.0 - u) / weights[i], i);
  }
  if (keys.size() < k) {
    throw ConfigError("generator.anomaly_group_skew: only " + std::to_string(keys.size()) +
                      " nodes eligible for " + std::to_string(k) + " anomalies");
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t t = 0; t < k; ++t) out.push_back(keys[t].second);
  return out;
}

void label(AttributedGraph& g, std::size_t id) {
  if (!g.labels) g.labels = std::vector<std::uint8_t>(g.n_nodes, 0);
  (*g.labels)[id] = 1;
}

}  // namespace

GeneratedGraph generate_graph(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_nodes;
  const std::size_t total_anomalies =
      static_cast<std::size_t>(std::llround(cfg.anomaly_ratio * static_cast<double>(n)));
  std::size_t structural =
      static_cast<std::size_t>(std::llround(cfg.structural_fraction * static_cast<double>(total_anomalies)));
  structural -= structural % cfg.clique_size;
  if (structural > n) throw ConfigError("generator.clique_size: cliques exceed the node budget");

  GeneratedGraph out;
  AttributedGraph& g = out.graph;
  g.n_nodes = n;

  Rng srng = Rng::stream(cfg.seed, "sensitive");
  g.sensitive.resize(n);
  for (auto& s : g.sensitive) s = srng.bernoulli(cfg.minority_ratio) ? 1 : 0;

  Rng crng = Rng::stream(cfg.seed, "clusters");
  std::vector<std::size_t> cluster(n);
  for (auto& c : cluster) c = static_cast<std::size_t>(crng.uniform_int(cfg.n_clusters));

  // members[s][c]: nodes with sensitive value s in cluster c.
  std::array<std::vector<std::vector<std::size_t>>, 2> members;
  std::array<std::vector<std::size_t>, 2> group;
  for (int s = 0; s < 2; ++s) members[s].resize(cfg.n_clusters);
  for (std::size_t i = 0; i < n; ++i) {
    members[g.sensitive[i]][cluster[i]].push_back(i);
    group[g.sensitive[i]].push_back(i);
  }

  Rng erng = Rng::stream(cfg.seed, "edges");
  const std::size_t target_edges =
      static_cast<std::size_t>(std::llround(cfg.avg_degree * static_cast<double>(n) / 2.0));
  std::unordered_set<std::uint64_t> seen;
  std::vector<Edge> edges;
  edges.reserve(target_edges);
  const std::size_t max_attempts = 50 * target_edges + 1000;
  for (std::size_t attempt = 0; attempt < max_attempts && edges.size() < target_edges; ++attempt) {
    const auto u = static_cast<std::size_t>(erng.uniform_int(n));
    const int su = g.sensitive[u];
    const int sv = erng.bernoulli(cfg.homophily) ? su : 1 - su;
    const bool same_cluster = erng.bernoulli(cfg.community_affinity);
    const std::vector<std::size_t>& pool = same_cluster ? members[sv][cluster[u]] : group[sv];
    if (pool.empty()) continue;
    const std::size_t v = pool[erng.uniform_int(pool.size())];
    if (v == u || !seen.insert(edge_key(u, v)).second) continue;
    edges.emplace_back(u, v);
  }
  g.adjacency = graph::build_csr(edges, n);

  Rng arng = Rng::stream(cfg.seed, "attributes");
  const std::size_t d = cfg.n_attrs;
  std::vector<double> direction(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : direction) {
      v = arng.normal();
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& v : direction) v /= norm;
  std::vector<std::vector<double>> centers(cfg.n_clusters, std::vector<double>(d));
  for (auto& c : centers) {
    for (auto& v : c) v = arng.normal();
  }
  g.attributes = ad::Tensor({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double shift = cfg.bias_strength * g.sensitive[i];
    for (std::size_t j = 0; j < d; ++j) {
      g.attributes(i, j) = centers[cluster[i]][j] + shift * direction[j] + cfg.noise_std * arng.normal();
    }
  }
  g.labels = std::vector<std::uint8_t>(n, 0);

  Rng selrng = Rng::stream(cfg.seed, "anomaly-select");
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = g.sensitive[i] ? cfg.anomaly_group_skew : 1.0 - cfg.anomaly_group_skew;
  }
  std::vector<std::size_t> chosen = weighted_sample(weights, total_anomalies, selrng);
  selrng.shuffle(chosen);

  const std::span<const std::size_t> all(chosen);
  const auto structural_ids = all.subspan(0, structural);
  const auto contextual_ids = all.subspan(structural);

  inject_structural_anomalies(g, structural_ids, cfg.clique_size);
  Rng ctx = Rng::stream(cfg.seed, "contextual");
  inject_contextual_anomalies(g, contextual_ids, cfg.contextual_pool_size, ctx);

  auto& rep = out.report;
  rep.structural_anomaly_ids.assign(structural_ids.begin(), structural_ids.end());
  rep.contextual_anomaly_ids.assign(contextual_ids.begin(), contextual_ids.end());
  for (std::size_t id : chosen) ++rep.per_group_anomaly_counts[g.sensitive[id]];
  rep.bias_direction = std::move(direction);
  g.validate();
  return out;
}

void inject_structural_anomalies(AttributedGraph& g, std::span<const std::size_t> ids,
                                 std::size_t clique_size) {
  if (clique_size < 2) throw PreconditionError("inject_structural_anomalies: clique_size < 2");
  if (ids.size() % clique_size != 0) {
    throw PreconditionError("inject_structural_anomalies: " + std::to_string(ids.size()) +
                            " ids do not split into cliques of " + std::to_string(clique_size));
  }
  if (ids.size() > g.n_nodes) throw PreconditionError("inject_structural_anomalies: insufficient nodes");
  if (ids.empty()) return;
  std::vector<Edge> edges = graph::upper_edges(g.adjacency);
  for (std::size_t start = 0; start < ids.size(); start += clique_size) {
    for (std::size_t a = start; a < start + clique_size; ++a) {
      for (std::size_t b = a + 1; b < start + clique_size; ++b) edges.emplace_back(ids[a], ids[b]);
    }
  }
  g.adjacency = graph::build_csr(edges, g.n_nodes);
  for (std::size_t id : ids) label(g, id);
}

std::vector<std::size_t> inject_structural_anomalies(AttributedGraph& g, std::size_t count,
                                                     std::size_t clique_size, Rng& rng) {
  if (count * clique_size > g.n_nodes) {
    throw PreconditionError("inject_structural_anomalies: insufficient nodes for " +
                            std::to_string(count) + " x " + std::to_string(clique_size));
  }
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    if (!g.labels || (*g.labels)[i] == 0) free.push_back(i);
  }
  if (free.size() < count) throw PreconditionError("inject_structural_anomalies: insufficient nodes");
  rng.shuffle(free);
  free.resize(count);
  inject_structural_anomalies(g, free, clique_size);
  return free;
}

void inject_contextual_anomalies(AttributedGraph& g, std::span<const std::size_t> ids,
                                 std::size_t pool_size, Rng& rng) {
  if (pool_size < 2) throw PreconditionError("inject_contextual_anomalies: pool_size < 2");
  if (ids.empty()) return;
  if (g.n_nodes < 2) throw PreconditionError("inject_contextual_anomalies: need at least 2 nodes");
  const ad::Tensor original = g.attributes;
  const std::size_t d = original.cols();
  for (std::size_t id : ids) {
    std::size_t best = id;
    double best_dist = -1.0;
    for (std::size_t k = 0; k < pool_size; ++k) {
      std::size_t c = static_cast<std::size_t>(rng.uniform_int(g.n_nodes - 1));
      if (c >= id) ++c;  // skip the node itself
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = original(id, j) - original(c, j);
        dist += diff * diff;
      }
      if (dist > best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) g.attributes(id, j) = original(best, j);
    label(g, id);
  }
}

std::vector<std::size_t> inject_contextual_anomalies(AttributedGraph& g, std::size_t count,
                                                     std::size_t pool_size, Rng& rng) {
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    if (!g.labels || (*g.labels)[i] == 0) free.push_back(i);
  }
  if (free.size() < count) throw PreconditionError("inject_contextual_anomalies: insufficient nodes");
  rng.shuffle(free);
  free.resize(count);
  inject_contextual_anomalies(g, free, pool_size, rng);
  return free;
}

double same_group_edge_fraction(const AttributedGraph& g) {
  const auto edges = graph::upper_edges(g.adjacency);
  if (edges.empty()) return 0.0;
  std::size_t same = 0;
  for (const auto& [i, j] : edges) same += g.sensitive[i] == g.sensitive[j];
  return static_cast<double>(same) / static_cast<double>(edges.size());
}

}  // namespace defend::synth
