#include <cmath>

#include "defend/autodiff/adam.hpp"
#include "defend/errors.hpp"
#include "defend/json_fields.hpp"
#include "defend/rng.hpp"
#include "defend/training/training.hpp"

namespace defend::training {

namespace ops = defend::ad;
using ad::Tape;
using ad::Var;

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::kNone: return "none";
    case Regularizer::kFairOD: return "fairod";
    case Regularizer::kCorrelation: return "correlation";
    case Regularizer::kHin: return "hin";
  }
  return "?";
}

Regularizer parse_regularizer(const std::string& name) {
  for (Regularizer r : {Regularizer::kNone, Regularizer::kFairOD, Regularizer::kCorrelation, Regularizer::kHin}) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError("unknown regularizer '" + name + "' (valid: none, fairod, correlation, hin)");
}

void BaselineConfig::validate() const {
  auto fail = [](const std::string& f, const std::string& m) { throw ConfigError("baseline." + f + ": " + m); };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda", "must be >= 0");
  if (!(gamma_adcg >= 0.0) || !std::isfinite(gamma_adcg)) fail("gamma_adcg", "must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be positive");
  if (hidden == 0) fail("hidden", "must be positive");
  if (latent == 0) fail("latent", "must be positive");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"regularizer", to_string(regularizer)},
          {"lambda", lambda},
          {"gamma_adcg", gamma_adcg},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"structure_reconstruction", structure_reconstruction},
          {"hidden", hidden},
          {"latent", latent}};
}

BaselineConfig BaselineConfig::from_json(const nlohmann::json& j, const std::string& path) {
  BaselineConfig c;
  JsonFields f(j, path);
  std::string reg;
  if (f.read("regularizer", reg)) c.regularizer = parse_regularizer(reg);
  f.read("lambda", c.lambda);
  f.read("gamma_adcg", c.gamma_adcg);
  f.read("epochs", c.epochs);
  f.read("learning_rate", c.learning_rate);
  f.read("structure_reconstruction", c.structure_reconstruction);
  f.read("hidden", c.hidden);
  f.read("latent", c.latent);
  f.finish();
  return c;
}

namespace {

struct BaselinePass {
  Var loss;
  Var o;
  LossReport report;
};

BaselinePass baseline_pass(Tape& tape, const GraphContext& ctx, const BaselineConfig& cfg,
                           model::BaselineParams& p, Reduction reduction, const Tensor* base_scores) {
  BaselinePass out;
  const bool structure = cfg.structure_reconstruction && ctx.epsilon_mix > 0.0;
  const double eps = structure ? ctx.epsilon_mix : 0.0;
  auto fwd = model::baseline_forward(tape, ctx.norm_adj, tape.constant(ctx.x()), p, structure);
  Var base = losses::recon_loss(ctx.x(), fwd.x_hat, ctx.a_dense, fwd.a_logits, eps, reduction, &out.report.rec_x,
                                &out.report.rec_a);
  // Per-node score: mixed attribute and structure reconstruction error.
  out.o = losses::anomaly_scores(ctx.x(), fwd.x_hat);
  if (structure) {
    Var a_err = ops::frobenius_sq_rows(ops::sub(ops::sigmoid(fwd.a_logits), tape.constant(ctx.a_dense)));
    out.o = ops::add(ops::scale(out.o, 1.0 - eps), ops::scale(a_err, eps));
  }

  Var reg;
  switch (cfg.regularizer) {
    case Regularizer::kNone: break;
    case Regularizer::kFairOD:
      if (cfg.lambda != 0.0) reg = ops::scale(losses::fairod_dp(out.o, ctx.s), cfg.lambda);
      if (cfg.gamma_adcg != 0.0) {
        Var adcg = ops::scale(losses::fairod_adcg(out.o, *base_scores, ctx.s), cfg.gamma_adcg);
        reg = reg.valid() ? ops::add(reg, adcg) : adcg;
      }
      break;
    case Regularizer::kCorrelation:
      if (cfg.lambda != 0.0) reg = ops::scale(losses::correlation_regularizer(out.o, ctx.s), cfg.lambda);
      break;
    case Regularizer::kHin:
      if (cfg.lambda != 0.0) {
        Var probs = ops::sigmoid(losses::standardize(out.o));
        reg = ops::scale(losses::hin_dp(probs, ctx.s), cfg.lambda);
      }
      if (cfg.gamma_adcg != 0.0) {
        Var adcg = ops::scale(losses::fairod_adcg(out.o, *base_scores, ctx.s), cfg.gamma_adcg);
        reg = reg.valid() ? ops::add(reg, adcg) : adcg;
      }
      break;
  }
  out.report.kl = out.report.dis = out.report.pre = out.report.adv = std::nan("");
  out.report.corr = reg.valid() ? reg.item() : 0.0;
  out.loss = reg.valid() ? ops::add(base, reg) : base;
  out.report.total = out.loss.item();
  return out;
}

}  // namespace

BaselineModel train_baseline_with_regularizer(const graph::AttributedGraph& g, const BaselineConfig& cfg,
                                              std::uint64_t seed, Reduction reduction, const Tensor* base_scores) {
  cfg.validate();
  const bool needs_base = cfg.regularizer == Regularizer::kFairOD ||
                          (cfg.regularizer == Regularizer::kHin && cfg.gamma_adcg > 0.0);
  if (needs_base && base_scores == nullptr) {
    throw PreconditionError("train_baseline_with_regularizer: " + to_string(cfg.regularizer) +
                            " needs base scores from a prior 'none' run");
  }
  if (base_scores != nullptr && base_scores->shape() != ad::Shape{g.n_nodes, 1}) {
    throw DimensionError("train_baseline_with_regularizer: base scores " + base_scores->shape().str() +
                         " for " + std::to_string(g.n_nodes) + " nodes");
  }
  const bool structure = cfg.structure_reconstruction && graph::structure_weight(g) > 0.0;
  GraphContext ctx = GraphContext::prepare(g, structure);
  Rng rng = Rng::stream(seed, "baseline-init");
  model::BaselineParams params = model::init_baseline({g.n_attrs(), cfg.hidden, cfg.latent}, rng);
  auto named = model::parameters(params);
  model::set_requires_grad(named, true);
  std::vector<Tensor*> ptrs;
  for (const auto& n : named) ptrs.push_back(n.tensor);
  ad::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  ad::Adam opt(ptrs, adam_cfg);

  BaselineModel out;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    BaselinePass pass = baseline_pass(tape, ctx, cfg, params, reduction, base_scores);
    if (!std::isfinite(pass.report.total)) {
      throw NumericalError("baseline epoch " + std::to_string(epoch) + ": total is not finite");
    }
    EpochRecord rec{1, epoch, pass.report, std::abs(losses::pearson(pass.o.value().data(), ctx.s.data()))};
    out.history.push_back(rec);
    tape.backward(pass.loss);
    opt.step();
  }
  Tape tape;
  out.scores = baseline_pass(tape, ctx, cfg, params, reduction, base_scores).o.value();
  out.params = std::move(params);
  return out;
}

}  // namespace defend::training
