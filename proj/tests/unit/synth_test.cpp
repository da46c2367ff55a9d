#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "defend/errors.hpp"
#include "defend/synth/generator.hpp"

using namespace defend;
using namespace defend::synth;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Projection of each attribute row on the bias direction, against s.
double bias_correlation(const GeneratedGraph& gen) {
  const auto& g = gen.graph;
  std::vector<double> proj(g.n_nodes), s(g.n_nodes);
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    for (std::size_t j = 0; j < g.n_attrs(); ++j) proj[i] += g.attributes(i, j) * gen.report.bias_direction[j];
    s[i] = g.sensitive[i];
  }
  return pearson(proj, s);
}

double row_distance(const ad::Tensor& x, std::size_t i, const ad::Tensor& y, std::size_t k) {
  double acc = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) acc += (x(i, j) - y(k, j)) * (x(i, j) - y(k, j));
  return std::sqrt(acc);
}

}  // namespace

TEST(Generator, DefaultsProduceExpectedShape) {
  GeneratorConfig cfg;
  auto gen = generate_graph(cfg);
  const auto& g = gen.graph;
  g.validate();
  EXPECT_EQ(g.n_nodes, 2000u);
  EXPECT_EQ(g.n_attrs(), 32u);
  std::size_t minority = std::count(g.sensitive.begin(), g.sensitive.end(), 1);
  EXPECT_NEAR(static_cast<double>(minority) / 2000.0, 0.15, 0.03);
  std::size_t anomalies = std::count(g.labels->begin(), g.labels->end(), 1);
  EXPECT_EQ(anomalies, 160u);
  EXPECT_EQ(gen.report.structural_anomaly_ids.size() + gen.report.contextual_anomaly_ids.size(), 160u);
  EXPECT_EQ(gen.report.structural_anomaly_ids.size() % cfg.clique_size, 0u);
  EXPECT_EQ(gen.report.per_group_anomaly_counts[0] + gen.report.per_group_anomaly_counts[1], 160u);
  EXPECT_NEAR(same_group_edge_fraction(g), cfg.homophily, 0.05);
}

TEST(Generator, SameSeedIsBitIdentical) {
  GeneratorConfig cfg;
  cfg.n_nodes = 500;
  cfg.seed = 9;
  auto a = generate_graph(cfg);
  auto b = generate_graph(cfg);
  EXPECT_TRUE(a.graph == b.graph);
  EXPECT_EQ(a.report.structural_anomaly_ids, b.report.structural_anomaly_ids);
  cfg.seed = 10;
  EXPECT_FALSE(generate_graph(cfg).graph == a.graph);
}

TEST(Generator, FullHomophilyKeepsGroupsApart) {
  GeneratorConfig cfg;
  cfg.n_nodes = 600;
  cfg.homophily = 1.0;
  cfg.structural_fraction = 0.0;
  auto gen = generate_graph(cfg);
  EXPECT_DOUBLE_EQ(same_group_edge_fraction(gen.graph), 1.0);
}

TEST(Generator, HomophilyTracksConfigAcrossValues) {
  for (double h : {0.5, 0.7, 0.9}) {
    GeneratorConfig cfg;
    cfg.homophily = h;
    cfg.structural_fraction = 0.0;
    cfg.seed = 3;
    EXPECT_NEAR(same_group_edge_fraction(generate_graph(cfg).graph), h, 0.05) << h;
  }
}

TEST(Generator, BiasStrengthControlsAttributeCorrelation) {
  GeneratorConfig cfg;
  cfg.bias_strength = 0.0;
  EXPECT_LT(std::abs(bias_correlation(generate_graph(cfg))), 0.1);
  cfg.bias_strength = 1.5;
  EXPECT_GT(bias_correlation(generate_graph(cfg)), 0.3);
}

TEST(Generator, NeutralSkewGivesEqualRates) {
  GeneratorConfig cfg;
  cfg.n_nodes = 20000;
  cfg.anomaly_group_skew = 0.5;
  cfg.structural_fraction = 0.0;
  cfg.avg_degree = 4;
  auto gen = generate_graph(cfg);
  const auto& g = gen.graph;
  std::array<double, 2> size{0, 0};
  for (auto s : g.sensitive) size[s] += 1;
  const double r0 = gen.report.per_group_anomaly_counts[0] / size[0];
  const double r1 = gen.report.per_group_anomaly_counts[1] / size[1];
  EXPECT_LT(std::abs(r0 - r1), 0.03);
}

TEST(Generator, PositiveSkewFavoursMinority) {
  GeneratorConfig cfg;
  auto gen = generate_graph(cfg);
  std::array<double, 2> size{0, 0};
  for (auto s : gen.graph.sensitive) size[s] += 1;
  EXPECT_GT(gen.report.per_group_anomaly_counts[1] / size[1],
            gen.report.per_group_anomaly_counts[0] / size[0]);
}

TEST(Generator, ValidationNamesField) {
  GeneratorConfig cfg;
  cfg.minority_ratio = 0.7;
  try {
    generate_graph(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("minority_ratio"), std::string::npos);
  }
  cfg = {};
  cfg.clique_size = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.n_nodes = 5;
  cfg.clique_size = 10;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Generator, JsonRoundTripAndUnknownKeys) {
  GeneratorConfig cfg;
  cfg.homophily = 0.6;
  cfg.seed = 77;
  auto back = GeneratorConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  auto j = cfg.to_json();
  j["homophilly"] = 0.5;
  try {
    GeneratorConfig::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("generator.homophilly"), std::string::npos);
  }
  j = cfg.to_json();
  j["n_nodes"] = "many";
  EXPECT_THROW(GeneratorConfig::from_json(j), ConfigError);
}

TEST(StructuralInjection, ThreeClique) {
  graph::AttributedGraph g;
  g.n_nodes = 6;
  g.adjacency = graph::build_csr({{0, 1}, {4, 5}}, 6);
  g.attributes = ad::Tensor({6, 1});
  g.sensitive.assign(6, 0);
  std::vector<std::size_t> ids{0, 1, 2};
  inject_structural_anomalies(g, ids, 3);
  EXPECT_EQ(g.n_edges(), 4u);  // two new edges, (0,1) already present
  EXPECT_TRUE(g.adjacency.contains(0, 2) && g.adjacency.contains(1, 2));
  EXPECT_EQ(*g.labels, (std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0}));
  std::vector<std::size_t> uneven{3, 4};
  EXPECT_THROW(inject_structural_anomalies(g, uneven, 3), PreconditionError);
}

TEST(StructuralInjection, DegreesIncrease) {
  GeneratorConfig cfg;
  cfg.n_nodes = 400;
  cfg.structural_fraction = 0.0;
  auto g = generate_graph(cfg).graph;
  g.labels = std::vector<std::uint8_t>(g.n_nodes, 0);
  const auto before = g.adjacency;
  Rng rng(5);
  auto ids = inject_structural_anomalies(g, 20, 10, rng);
  ASSERT_EQ(ids.size(), 20u);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t a = 0; a < 10; ++a) {
      const std::size_t i = ids[c * 10 + a];
      bool full = true;
      for (std::size_t b = 0; b < 10; ++b) {
        if (a != b) {
          EXPECT_TRUE(g.adjacency.contains(i, ids[c * 10 + b]));
          full = full && before.contains(i, ids[c * 10 + b]);
        }
      }
      if (!full) EXPECT_GT(g.adjacency.row_nnz(i), before.row_nnz(i));
    }
  }
  Rng r2(1);
  EXPECT_THROW(inject_structural_anomalies(g, 50, 10, r2), PreconditionError);
}

TEST(ContextualInjection, CopiesDistantOriginalRow) {
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeneratorConfig cfg;
    cfg.n_nodes = 300;
    cfg.seed = seed;
    cfg.structural_fraction = 0.0;
    cfg.anomaly_ratio = 0.01;
    auto g = generate_graph(cfg).graph;
    g.labels = std::vector<std::uint8_t>(g.n_nodes, 0);
    const ad::Tensor original = g.attributes;
    Rng rng = Rng::stream(seed, "test-contextual");
    auto ids = inject_contextual_anomalies(g, 10, 50, rng);
    std::vector<double> dists;
    for (std::size_t i = 0; i < g.n_nodes; ++i)
      for (std::size_t k = i + 1; k < g.n_nodes; ++k) dists.push_back(row_distance(original, i, original, k));
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double median = dists[dists.size() / 2];
    for (std::size_t id : ids) {
      EXPECT_EQ((*g.labels)[id], 1);
      bool copied = false;
      for (std::size_t k = 0; k < g.n_nodes; ++k) {
        if (k != id && row_distance(g.attributes, id, original, k) == 0.0) copied = true;
      }
      EXPECT_TRUE(copied);
      ratios.push_back(row_distance(g.attributes, id, original, id) / median);
    }
  }
  double mean = 0.0;
  for (double r : ratios) mean += r;
  mean /= static_cast<double>(ratios.size());
  EXPECT_GT(mean, 1.0);
}
