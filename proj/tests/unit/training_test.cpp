#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "defend/errors.hpp"
#include "defend/losses/losses.hpp"
#include "defend/synth/generator.hpp"
#include "defend/training/training.hpp"

using namespace defend;
using namespace defend::training;

namespace {

graph::AttributedGraph small_graph(std::uint64_t seed, double bias = 3.0) {
  synth::GeneratorConfig gc;
  gc.n_nodes = 300;
  gc.seed = seed;
  gc.bias_strength = bias;
  return synth::generate_graph(gc).graph;
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.phase1_max_epochs = 30;
  c.patience = 10;
  c.phase2_epochs = 30;
  c.hidden = 16;
  c.latent = 8;
  return c;
}

double checksum(model::ModelParams& p, model::Part part) {
  double acc = 0.0;
  for (const auto& nt : model::parameters(p, part)) {
    for (double v : nt.tensor->data()) acc += v * 1.000001 + std::abs(v);
  }
  return acc;
}

std::vector<double> all_values(model::ModelParams& p, model::Part part) {
  std::vector<double> out;
  for (const auto& nt : model::parameters(p, part)) out.insert(out.end(), nt.tensor->data().begin(), nt.tensor->data().end());
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(EarlyStopper, PatienceCounter) {
  EarlyStopper stop(2);
  const std::vector<double> losses{3, 2, 2, 2, 2};
  std::size_t stopped_at = losses.size();
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (stop.update(losses[i])) {
      stopped_at = i;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 3u);
  EXPECT_EQ(stop.best_epoch(), 1u);
  EXPECT_EQ(stop.best(), 2.0);
}

TEST(EarlyStopper, ImprovementResetsCounter) {
  EarlyStopper stop(2);
  EXPECT_FALSE(stop.update(5));
  EXPECT_TRUE(stop.improved());
  EXPECT_FALSE(stop.update(6));
  EXPECT_FALSE(stop.update(4));
  EXPECT_FALSE(stop.update(4.5));
  EXPECT_TRUE(stop.update(4.0));
  EXPECT_EQ(stop.best_epoch(), 2u);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  c.patience = c.phase1_max_epochs;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.weights.beta = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.variant = Variant::kWithStruct;
  c.learning_rate = 0.002;
  c.shuffle_policy = ShufflePolicy::kFixed;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto j = c.to_json();
  j["mystery"] = 1;
  try {
    TrainConfig::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.mystery"), std::string::npos);
  }
  EXPECT_THROW(parse_variant("DEFEND"), ConfigError);
  for (Variant v : {Variant::kFull, Variant::kNoCorr, Variant::kVanillaVgae, Variant::kNoAdversary,
                    Variant::kWithStruct}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
}

TEST(Phase1, LossDecreasesOnSmallGraphs) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = small_graph(seed);
    auto cfg = quick_config(seed);
    cfg.patience = cfg.phase1_max_epochs - 1;
    const auto ctx = GraphContext::prepare(g, true);
    auto params = init_params(ctx, cfg);
    const auto r = train_phase1(ctx, cfg, params);
    ASSERT_EQ(r.history.size(), r.epochs_run);
    EXPECT_LT(r.history.back().loss.total, r.history.front().loss.total) << "seed " << seed;
  }
}

TEST(Phase1, BestEpochRestored) {
  const auto g = small_graph(3);
  auto cfg = quick_config(3);
  cfg.learning_rate = 0.05;  // noisy enough for the best epoch to sit before the last
  cfg.patience = 3;
  const auto ctx = GraphContext::prepare(g, true);
  auto params = init_params(ctx, cfg);
  const auto r = train_phase1(ctx, cfg, params);
  EXPECT_LE(r.best_epoch, r.epochs_run - 1);
  EXPECT_EQ(r.best_loss, r.history[r.best_epoch].loss.total);
  const auto again = phase1_objective(ctx, cfg, params, r.best_epoch);
  EXPECT_NEAR(again.total, r.best_loss, 1e-10);
}

TEST(Phase1, NoAdversaryLeavesAdversaryUntouched) {
  const auto g = small_graph(4);
  auto cfg = quick_config(4);
  cfg.variant = Variant::kNoAdversary;
  const auto ctx = GraphContext::prepare(g, true);
  auto params = init_params(ctx, cfg);
  const auto before = all_values(params, model::Part::kAdversary);
  const auto r = train_phase1(ctx, cfg, params);
  EXPECT_EQ(all_values(params, model::Part::kAdversary), before);
  for (const auto& h : r.history) {
    EXPECT_EQ(h.loss.dis, 0.0);
    EXPECT_NEAR(h.loss.total, h.loss.rec_x * (1 - ctx.epsilon_mix) + h.loss.rec_a * ctx.epsilon_mix + h.loss.kl +
                                  cfg.weights.alpha * h.loss.pre,
                1e-10);
  }
}

TEST(Phase1, ReportTotalMatchesParts) {
  const auto g = small_graph(5);
  auto cfg = quick_config(5);
  cfg.weights.alpha = 2.0;
  cfg.weights.gamma = 0.5;
  const auto ctx = GraphContext::prepare(g, true);
  auto params = init_params(ctx, cfg);
  const auto r = train_phase1(ctx, cfg, params);
  for (const auto& h : r.history) {
    const double rec = (1 - ctx.epsilon_mix) * h.loss.rec_x + ctx.epsilon_mix * h.loss.rec_a;
    EXPECT_NEAR(h.loss.total, rec + h.loss.kl + 0.5 * h.loss.dis + 2.0 * h.loss.pre, 1e-10);
  }
}

TEST(Phase2, EncoderFrozen) {
  const auto g = small_graph(6);
  auto cfg = quick_config(6);
  const auto ctx = GraphContext::prepare(g, true);
  auto params = init_params(ctx, cfg);
  train_phase1(ctx, cfg, params);
  const double enc = checksum(params, model::Part::kEncoder);
  const auto enc_values = all_values(params, model::Part::kEncoder);
  const double dec = checksum(params, model::Part::kAnomalyDecoder);
  const auto r = train_phase2(ctx, cfg, params);
  EXPECT_EQ(checksum(params, model::Part::kEncoder), enc);
  EXPECT_EQ(all_values(params, model::Part::kEncoder), enc_values);
  EXPECT_NE(checksum(params, model::Part::kAnomalyDecoder), dec);
  EXPECT_EQ(r.history.size(), r.epochs_run);
  for (double v : r.scores.data()) EXPECT_GE(v, 0.0);
}

TEST(Phase2, ZeroBetaIsMeanReconstruction) {
  const auto g = small_graph(7);
  auto cfg = quick_config(7);
  cfg.weights.beta = 0.0;
  const auto ctx = GraphContext::prepare(g, true);
  auto params = init_params(ctx, cfg);
  train_phase1(ctx, cfg, params);
  const auto r = train_phase2(ctx, cfg, params);
  for (const auto& h : r.history) EXPECT_DOUBLE_EQ(h.loss.total, h.loss.rec_x);
}

TEST(Phase2, CorrelationConstraintReducesDependence) {
  std::vector<double> first, last;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = small_graph(seed);
    auto cfg = quick_config(seed);
    cfg.weights.beta = 10.0;
    const auto m = train(g, cfg);
    for (const auto& h : m.history) {
      if (h.phase == 2) {
        first.push_back(h.abs_pearson_o_s);
        break;
      }
    }
    last.push_back(m.history.back().abs_pearson_o_s);
  }
  EXPECT_LT(median(last), median(first));
}

TEST(Train, DeterministicScores) {
  const auto g = small_graph(8);
  const auto cfg = quick_config(8);
  const auto a = train(g, cfg);
  const auto b = train(g, cfg);
  ASSERT_EQ(a.scores.size(), b.scores.size());
  for (std::size_t i = 0; i < a.scores.size(); ++i) ASSERT_EQ(a.scores[i], b.scores[i]);
  auto other = cfg;
  other.seed = 9;
  EXPECT_NE(train(g, other).scores.data()[0], a.scores.data()[0]);
}

TEST(Train, Variants) {
  const auto g = small_graph(9);
  auto cfg = quick_config(9);
  cfg.variant = Variant::kVanillaVgae;
  auto vanilla = train(g, cfg);
  EXPECT_FALSE(vanilla.params.encoder.has_sensitive_head());
  for (const auto& h : vanilla.history) {
    if (h.phase == 2) EXPECT_TRUE(std::isnan(h.loss.corr));
  }
  cfg.variant = Variant::kWithStruct;
  auto with_struct = train(g, cfg);
  EXPECT_FALSE(with_struct.params.anomaly_structure.weight.empty());
  EXPECT_EQ(with_struct.history.size(), with_struct.phase1_epochs + with_struct.phase2_epochs);
  for (double v : with_struct.scores.data()) EXPECT_GE(v, 0.0);
}

TEST(Baseline, ZeroLambdaMatchesNone) {
  const auto g = small_graph(10);
  BaselineConfig none;
  none.epochs = 20;
  const auto base = train_baseline_with_regularizer(g, none, 1);
  for (Regularizer r : {Regularizer::kHin, Regularizer::kCorrelation, Regularizer::kFairOD}) {
    BaselineConfig c = none;
    c.regularizer = r;
    c.lambda = 0.0;
    const auto m = train_baseline_with_regularizer(g, c, 1, Reduction::kMean, &base.scores);
    for (std::size_t i = 0; i < m.scores.size(); ++i) ASSERT_EQ(m.scores[i], base.scores[i]) << to_string(r);
  }
}

TEST(Baseline, Preconditions) {
  const auto g = small_graph(11);
  BaselineConfig c;
  c.epochs = 2;
  c.regularizer = Regularizer::kFairOD;
  EXPECT_THROW(train_baseline_with_regularizer(g, c, 0), PreconditionError);
  c.regularizer = Regularizer::kHin;
  c.gamma_adcg = 0.5;
  EXPECT_THROW(train_baseline_with_regularizer(g, c, 0), PreconditionError);
  try {
    parse_regularizer("fancy");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* name : {"none", "fairod", "correlation", "hin"}) EXPECT_NE(msg.find(name), std::string::npos);
  }
}

TEST(Baseline, CorrelationRegularizerLowersCosine) {
  std::vector<double> plain, regularized;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = small_graph(seed);
    BaselineConfig c;
    c.epochs = 40;
    const auto s = ad::Tensor::column(std::vector<double>(g.sensitive.begin(), g.sensitive.end()));
    plain.push_back(std::abs(losses::cosine(train_baseline_with_regularizer(g, c, seed).scores.data(), s.data())));
    c.regularizer = Regularizer::kCorrelation;
    c.lambda = 10.0;
    regularized.push_back(
        std::abs(losses::cosine(train_baseline_with_regularizer(g, c, seed).scores.data(), s.data())));
  }
  EXPECT_LT(median(regularized), median(plain));
}
