#include "defend/training/training.hpp"

#include <cmath>
#include <stdexcept>

#include "defend/autodiff/adam.hpp"
#include "defend/errors.hpp"
#include "defend/json_fields.hpp"
#include "defend/rng.hpp"

namespace defend::training {

namespace ops = defend::ad;
using ad::Tape;
using ad::Var;
using model::ModelParams;
using model::Part;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "FULL";
    case Variant::kNoCorr: return "NO_CORR";
    case Variant::kVanillaVgae: return "VANILLA_VGAE";
    case Variant::kNoAdversary: return "NO_ADVERSARY";
    case Variant::kWithStruct: return "WITH_STRUCT";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kFull, Variant::kNoCorr, Variant::kVanillaVgae, Variant::kNoAdversary,
                    Variant::kWithStruct}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("train.variant: unknown variant '" + name +
                    "' (expected FULL, NO_CORR, VANILLA_VGAE, NO_ADVERSARY or WITH_STRUCT)");
}

std::string to_string(ShufflePolicy p) { return p == ShufflePolicy::kPerEpoch ? "per_epoch" : "fixed"; }

std::string to_string(Reduction r) { return r == Reduction::kMean ? "mean" : "sum"; }

Reduction parse_reduction(const std::string& name) {
  if (name == "mean") return Reduction::kMean;
  if (name == "sum") return Reduction::kSum;
  throw ConfigError("reduction: expected mean or sum, got '" + name + "'");
}

bool has_sensitive_head(Variant v) { return v != Variant::kVanillaVgae; }
bool uses_adversary(Variant v) { return v != Variant::kVanillaVgae && v != Variant::kNoAdversary; }
bool uses_correlation(Variant v) { return v != Variant::kVanillaVgae && v != Variant::kNoCorr; }

void TrainConfig::validate() const {
  auto fail = [](const std::string& f, const std::string& m) { throw ConfigError("train." + f + ": " + m); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be positive");
  if (phase1_max_epochs == 0) fail("phase1_max_epochs", "must be positive");
  if (patience >= phase1_max_epochs) fail("patience", "must be below phase1_max_epochs");
  if (hidden == 0) fail("hidden", "must be positive");
  if (latent == 0) fail("latent", "must be positive");
  auto weight = [](const char* f, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("weights.") + f + ": must be >= 0");
  };
  weight("alpha", weights.alpha);
  weight("gamma", weights.gamma);
  weight("beta", weights.beta);
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"phase1_max_epochs", phase1_max_epochs},
          {"patience", patience},
          {"phase2_epochs", phase2_epochs},
          {"variant", to_string(variant)},
          {"seed", seed},
          {"shuffle_policy", to_string(shuffle_policy)},
          {"reduction", to_string(reduction)},
          {"structure_reconstruction", structure_reconstruction},
          {"corr_on_probabilities", corr_on_probabilities},
          {"hidden", hidden},
          {"latent", latent}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const std::string& path) {
  TrainConfig c;
  JsonFields f(j, path);
  f.read("learning_rate", c.learning_rate);
  f.read("phase1_max_epochs", c.phase1_max_epochs);
  f.read("patience", c.patience);
  f.read("phase2_epochs", c.phase2_epochs);
  std::string text;
  if (f.read("variant", text)) c.variant = parse_variant(text);
  f.read("seed", c.seed);
  if (f.read("shuffle_policy", text)) {
    if (text == "per_epoch") {
      c.shuffle_policy = ShufflePolicy::kPerEpoch;
    } else if (text == "fixed") {
      c.shuffle_policy = ShufflePolicy::kFixed;
    } else {
      throw ConfigError(f.field("shuffle_policy") + ": expected per_epoch or fixed");
    }
  }
  if (f.read("reduction", text)) c.reduction = parse_reduction(text);
  f.read("structure_reconstruction", c.structure_reconstruction);
  f.read("corr_on_probabilities", c.corr_on_probabilities);
  f.read("hidden", c.hidden);
  f.read("latent", c.latent);
  f.finish();
  return c;
}

nlohmann::json weights_to_json(const LossWeights& w) {
  return {{"alpha", w.alpha}, {"gamma", w.gamma}, {"beta", w.beta}};
}

LossWeights weights_from_json(const nlohmann::json& j, const std::string& path) {
  LossWeights w;
  JsonFields f(j, path);
  f.read("alpha", w.alpha);
  f.read("gamma", w.gamma);
  f.read("beta", w.beta);
  f.finish();
  return w;
}

GraphContext GraphContext::prepare(const graph::AttributedGraph& g, bool dense_adjacency) {
  g.validate();
  GraphContext ctx;
  ctx.graph = &g;
  ctx.norm_adj = graph::symmetric_normalize(g.adjacency);
  if (dense_adjacency) ctx.a_dense = ops::kernel::densify(g.adjacency);
  ctx.s = graph::as_column(g.sensitive);
  ctx.epsilon_mix = graph::structure_weight(g);
  return ctx;
}

bool EarlyStopper::update(double loss) {
  improved_ = epoch_ == 0 || loss < best_;
  if (improved_) {
    best_ = loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  ++epoch_;
  return since_best_ >= patience_;
}

namespace {

std::vector<Tensor*> tensors(const std::vector<model::NamedTensor>& named) {
  std::vector<Tensor*> out;
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

std::vector<Tensor> snapshot(const std::vector<model::NamedTensor>& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) out.push_back(*n.tensor);
  return out;
}

void restore(const std::vector<model::NamedTensor>& named, const std::vector<Tensor>& saved) {
  for (std::size_t k = 0; k < named.size(); ++k) *named[k].tensor = saved[k];
}

void check_finite(double v, int phase, std::size_t epoch, const char* term) {
  if (!std::isfinite(v)) {
    throw NumericalError("phase " + std::to_string(phase) + " epoch " + std::to_string(epoch) + ": " + term +
                         " is not finite");
  }
}

Tensor phase1_noise(const TrainConfig& cfg, std::size_t n, std::size_t epoch) {
  Rng rng = Rng::stream(cfg.seed, "phase1-noise", epoch);
  Tensor noise({n, cfg.latent});
  for (auto& v : noise.storage()) v = rng.normal();
  return noise;
}

struct Phase1Forward {
  Var total;
  model::Latent latent;
  LossReport report;
};

Phase1Forward phase1_forward(Tape& tape, const GraphContext& ctx, const TrainConfig& cfg, ModelParams& p,
                             const Tensor& noise) {
  Phase1Forward out;
  LossReport& r = out.report;
  const bool structure = cfg.structure_reconstruction && ctx.epsilon_mix > 0.0;
  const double eps = structure ? ctx.epsilon_mix : 0.0;

  Var x = tape.constant(ctx.x());
  out.latent = model::encode(tape, ctx.norm_adj, x, p.encoder, &noise, false);
  const auto& lat = out.latent;
  Var x_hat = model::decode_attributes(tape, ctx.norm_adj, lat.z_x, lat.z_s, p.attr_decoder);
  Var a_logits = structure ? model::decode_structure(lat.z_x, lat.z_s) : Var{};
  Var rec = losses::recon_loss(ctx.x(), x_hat, ctx.a_dense, a_logits, eps, cfg.reduction, &r.rec_x, &r.rec_a);
  Var kl = losses::kl_gaussian(lat.mu, lat.log_sigma, cfg.reduction);
  r.kl = kl.item();
  Var dis, pre;
  r.dis = 0.0;
  r.pre = 0.0;
  if (uses_adversary(cfg.variant)) {
    dis = losses::disentangle_loss(model::adversary_logit(tape, lat.z_x, lat.z_s, p.adversary));
    r.dis = dis.item();
  }
  if (has_sensitive_head(cfg.variant)) {
    pre = losses::predictiveness_loss(lat.z_s, ctx.s, cfg.reduction);
    r.pre = pre.item();
  }
  out.total = losses::total_loss(rec, kl, dis, pre, cfg.weights);
  r.total = out.total.item();
  r.adv = 0.0;
  r.corr = std::nan("");
  return out;
}

void check_report(const LossReport& r, int phase, std::size_t epoch) {
  check_finite(r.rec_x, phase, epoch, "rec_x");
  check_finite(r.rec_a, phase, epoch, "rec_a");
  check_finite(r.kl, phase, epoch, "kl");
  check_finite(r.dis, phase, epoch, "dis");
  check_finite(r.pre, phase, epoch, "pre");
  check_finite(r.total, phase, epoch, "total");
}


struct Phase2Forward {
  Var loss;
  Var o;
  double rec = 0.0;
  double corr = 0.0;
};

Phase2Forward phase2_forward(Tape& tape, const GraphContext& ctx, const TrainConfig& cfg, ModelParams& p,
                             const std::vector<std::size_t>& perm) {
  Phase2Forward out;
  Var x = tape.constant(ctx.x());
  model::Latent lat = model::encode(tape, ctx.norm_adj, x, p.encoder, nullptr, true);
  Var z_s_shuffled = lat.z_s.valid() ? ops::permute_rows(lat.z_s, perm) : Var{};
  model::AnomalyDecoding dec = model::anomaly_decode(tape, lat.z_x, z_s_shuffled, p.anomaly_decoder);
  out.o = losses::anomaly_scores(ctx.x(), dec.x_tilde);
  if (cfg.variant == Variant::kWithStruct) {
    Var emb = p.anomaly_structure.forward(tape, dec.hidden);
    Var probs = ops::sigmoid(ops::gram(emb));
    Var structure_err = ops::frobenius_sq_rows(ops::sub(probs, tape.constant(ctx.a_dense)));
    out.o = ops::add(out.o, structure_err);
  }
  out.rec = (cfg.reduction == Reduction::kMean ? ops::mean(out.o) : ops::sum(out.o)).item();
  Var corr;
  if (uses_correlation(cfg.variant)) {
    Var s_pred = cfg.corr_on_probabilities ? model::predict_sensitive(lat.z_s) : lat.z_s;
    corr = losses::correlation_constraint(out.o, s_pred);
    out.corr = corr.item();
  } else {
    out.corr = std::nan("");
  }
  out.loss = losses::ad_loss(out.o, corr, cfg.weights.beta, cfg.reduction);
  return out;
}

}  // namespace

model::ModelParams init_params(const GraphContext& ctx, const TrainConfig& cfg) {
  Rng rng = Rng::stream(cfg.seed, "init");
  model::Dims dims{ctx.x().cols(), cfg.hidden, cfg.latent};
  model::ModelOptions opts;
  opts.sensitive_head = has_sensitive_head(cfg.variant);
  // The structure head is added at phase 2 from its own stream, so phase 1
  // is shared with FULL.
  opts.anomaly_structure = false;
  return model::init_model(dims, opts, rng);
}

LossReport phase1_objective(const GraphContext& ctx, const TrainConfig& cfg, ModelParams& params,
                            std::size_t epoch) {
  Tape tape;
  const Tensor noise = phase1_noise(cfg, ctx.n(), epoch);
  return phase1_forward(tape, ctx, cfg, params, noise).report;
}

Phase1Result train_phase1(const GraphContext& ctx, const TrainConfig& cfg, ModelParams& params) {
  cfg.validate();
  if (cfg.structure_reconstruction && ctx.epsilon_mix > 0.0 && ctx.a_dense.empty()) {
    throw PreconditionError("train_phase1: structure reconstruction needs the dense adjacency");
  }
  auto main_params = model::parameters(params, Part::kEncoder);
  for (auto& t : model::parameters(params, Part::kAttrDecoder)) main_params.push_back(t);
  auto adv_params = model::parameters(params, Part::kAdversary);
  auto all_params = model::parameters(params, Part::kAll);
  model::set_requires_grad(all_params, true);

  ad::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  ad::Adam main_opt(tensors(main_params), adam_cfg);
  ad::Adam adv_opt(tensors(adv_params), adam_cfg);
  const bool adversarial = uses_adversary(cfg.variant);

  Phase1Result result;
  EarlyStopper stopper(cfg.patience);
  std::vector<Tensor> best = snapshot(all_params);
  for (std::size_t epoch = 0; epoch < cfg.phase1_max_epochs; ++epoch) {
    const std::vector<Tensor> before = snapshot(all_params);
    const Tensor noise = phase1_noise(cfg, ctx.n(), epoch);
    Tensor z_x, z_s;
    LossReport report;
    {
      Tape tape;
      Phase1Forward fwd = phase1_forward(tape, ctx, cfg, params, noise);
      report = fwd.report;
      check_report(report, 1, epoch);
      if (adversarial) {
        z_x = fwd.latent.z_x.value();
        z_s = fwd.latent.z_s.value();
      }
      tape.backward(fwd.total);
    }
    main_opt.step();

    if (adversarial) {
      // Adversary step on detached latents from this epoch's forward pass,
      // with the adversary parameters the encoder step just used.
      Tape tape;
      Var zx = tape.constant(std::move(z_x));
      Var zs = tape.constant(std::move(z_s));
      const auto perm = Rng::stream(cfg.seed, "phase1-fake", epoch).permutation(ctx.n());
      Var l_true = model::adversary_logit(tape, zx, zs, params.adversary);
      Var l_fake = model::adversary_logit(tape, zx, ops::permute_rows(zs, perm), params.adversary);
      Var adv = losses::adversary_loss(l_true, l_fake);
      report.adv = adv.item();
      check_finite(report.adv, 1, epoch, "adv");
      tape.backward(adv);
      adv_opt.step();
    }

    result.history.push_back({1, epoch, report, 0.0});
    const bool stop = stopper.update(report.total);
    if (stopper.improved()) best = before;
    result.epochs_run = epoch + 1;
    if (stop) break;
  }
  restore(all_params, best);
  result.best_epoch = stopper.best_epoch();
  result.best_loss = stopper.best();
  return result;
}

Tensor score_nodes(const GraphContext& ctx, const TrainConfig& cfg, ModelParams& params,
                   const std::vector<std::size_t>& perm) {
  Tape tape;
  return phase2_forward(tape, ctx, cfg, params, perm).o.value();
}

Phase2Result train_phase2(const GraphContext& ctx, const TrainConfig& cfg, ModelParams& params) {
  cfg.validate();
  if (cfg.variant == Variant::kWithStruct && ctx.a_dense.empty()) {
    throw PreconditionError("train_phase2: WITH_STRUCT needs the dense adjacency");
  }
  auto encoder = model::parameters(params, Part::kEncoder);
  auto decoder = model::parameters(params, Part::kAnomalyDecoder);
  model::set_requires_grad(encoder, false);
  model::set_requires_grad(decoder, true);
  ad::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  ad::Adam opt(tensors(decoder), adam_cfg);

  const std::size_t n = ctx.n();
  const auto fixed = final_permutation(cfg, n);
  Phase2Result result;
  for (std::size_t epoch = 0; epoch < cfg.phase2_epochs; ++epoch) {
    const auto perm = cfg.shuffle_policy == ShufflePolicy::kPerEpoch
                          ? Rng::stream(cfg.seed, "phase2-shuffle", epoch).permutation(n)
                          : fixed;
    Tape tape;
    Phase2Forward fwd = phase2_forward(tape, ctx, cfg, params, perm);
    EpochRecord rec;
    rec.phase = 2;
    rec.epoch = epoch;
    rec.loss.rec_x = fwd.rec;
    rec.loss.rec_a = rec.loss.kl = rec.loss.dis = rec.loss.pre = rec.loss.adv = std::nan("");
    rec.loss.corr = fwd.corr;
    rec.loss.total = fwd.loss.item();
    rec.abs_pearson_o_s = std::abs(losses::pearson(fwd.o.value().data(), ctx.s.data()));
    check_finite(rec.loss.rec_x, 2, epoch, "rec_x");
    if (uses_correlation(cfg.variant)) check_finite(rec.loss.corr, 2, epoch, "corr");
    check_finite(rec.loss.total, 2, epoch, "total");
    tape.backward(fwd.loss);
    for (const auto& p : encoder) {
      for (double g : p.tensor->grad()) {
        if (g != 0.0) throw std::logic_error("train_phase2: encoder gradient on " + p.name + " is non-zero");
      }
    }
    opt.step();
    result.history.push_back(rec);
    result.epochs_run = epoch + 1;
  }
  result.scores = score_nodes(ctx, cfg, params, fixed);
  model::set_requires_grad(encoder, true);
  return result;
}

TrainedModel train_from_phase1(const GraphContext& ctx, const TrainConfig& cfg, const ModelParams& phase1,
                               const Phase1Result& p1) {
  TrainedModel out;
  out.params = phase1;
  if (cfg.variant == Variant::kWithStruct && out.params.anomaly_structure.weight.empty()) {
    Rng rng = Rng::stream(cfg.seed, "init-anomaly-structure");
    out.params.anomaly_structure = model::Linear::glorot(cfg.hidden, cfg.hidden, rng);
  }
  Phase2Result p2 = train_phase2(ctx, cfg, out.params);
  out.history = p1.history;
  out.history.insert(out.history.end(), p2.history.begin(), p2.history.end());
  out.phase1_epochs = p1.epochs_run;
  out.phase2_epochs = p2.epochs_run;
  out.best_epoch = p1.best_epoch;
  out.best_loss = p1.best_loss;
  out.epsilon_mix = ctx.epsilon_mix;
  out.scores = std::move(p2.scores);
  return out;
}

std::vector<std::size_t> final_permutation(const TrainConfig& cfg, std::size_t n) {
  return Rng::stream(cfg.seed, "phase2-final").permutation(n);
}

bool needs_dense_adjacency(const graph::AttributedGraph& g, const TrainConfig& cfg) {
  return (cfg.structure_reconstruction && structure_weight(g) > 0.0) || cfg.variant == Variant::kWithStruct;
}

nlohmann::json phase1_key(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"phase1_max_epochs", cfg.phase1_max_epochs},
          {"patience", cfg.patience},
          {"seed", cfg.seed},
          {"reduction", to_string(cfg.reduction)},
          {"structure_reconstruction", cfg.structure_reconstruction},
          {"hidden", cfg.hidden},
          {"latent", cfg.latent},
          {"alpha", cfg.weights.alpha},
          {"gamma", cfg.weights.gamma},
          {"sensitive_head", has_sensitive_head(cfg.variant)},
          {"adversary", uses_adversary(cfg.variant)}};
}

TrainedModel train(const graph::AttributedGraph& g, const TrainConfig& cfg) {
  cfg.validate();
  GraphContext ctx = GraphContext::prepare(g, needs_dense_adjacency(g, cfg));
  ModelParams params = init_params(ctx, cfg);
  Phase1Result p1 = train_phase1(ctx, cfg, params);
  return train_from_phase1(ctx, cfg, params, p1);
}

}  // namespace defend::training
