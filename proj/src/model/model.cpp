#include "defend/model/model.hpp"

#include <cmath>

#include "defend/errors.hpp"

namespace defend::model {

namespace ops = defend::ad;

Linear Linear::glorot(std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.weight = Tensor({in, out});
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& w : l.weight.storage()) w = rng.uniform(-limit, limit);
  l.bias = Tensor({1, out});
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

Var Linear::forward(Tape& tape, Var x) {
  return ops::add_bias(ops::matmul(x, tape.leaf(weight)), tape.leaf(bias));
}

Var Linear::propagate(Tape& tape, const graph::SparseMatrix& adj, Var x) {
  return forward(tape, ops::spmm(adj, x));
}

ModelParams init_model(const Dims& dims, const ModelOptions& options, Rng& rng) {
  if (dims.n_attrs == 0 || dims.hidden == 0 || dims.latent == 0) {
    throw PreconditionError("init_model: dimensions must be positive");
  }
  const std::size_t d = dims.n_attrs, h = dims.hidden, z = dims.latent;
  const std::size_t joint = z + (options.sensitive_head ? 1 : 0);
  ModelParams p;
  p.encoder.shared = Linear::glorot(d, h, rng);
  p.encoder.mu = Linear::glorot(h, z, rng);
  p.encoder.log_sigma = Linear::glorot(h, z, rng);
  if (options.sensitive_head) p.encoder.phi = Linear::glorot(h, 1, rng);
  p.attr_decoder = {Linear::glorot(joint, h, rng), Linear::glorot(h, d, rng)};
  if (options.sensitive_head) p.adversary = {Linear::glorot(z + 1, h, rng), Linear::glorot(h, 1, rng)};
  p.anomaly_decoder = {Linear::glorot(joint, h, rng), Linear::glorot(h, d, rng)};
  if (options.anomaly_structure) p.anomaly_structure = Linear::glorot(h, h, rng);
  return p;
}

BaselineParams init_baseline(const Dims& dims, Rng& rng) {
  if (dims.n_attrs == 0) throw PreconditionError("init_baseline: n_attrs must be positive");
  const std::size_t d = dims.n_attrs, h = dims.hidden, z = dims.latent;
  BaselineParams p;
  p.encoder = {Linear::glorot(d, h, rng), Linear::glorot(h, z, rng)};
  p.attr_decoder = {Linear::glorot(z, h, rng), Linear::glorot(h, d, rng)};
  return p;
}

namespace {

void add(std::vector<NamedTensor>& out, const std::string& name, Linear& l) {
  if (l.weight.empty()) return;
  out.push_back({name + ".weight", &l.weight});
  out.push_back({name + ".bias", &l.bias});
}

void add(std::vector<NamedTensor>& out, const std::string& name, TwoLayer& t) {
  add(out, name + ".layer1", t.layer1);
  add(out, name + ".layer2", t.layer2);
}

}  // namespace

std::vector<NamedTensor> parameters(ModelParams& p, Part part) {
  std::vector<NamedTensor> out;
  const bool all = part == Part::kAll;
  if (all || part == Part::kEncoder) {
    add(out, "encoder.shared", p.encoder.shared);
    add(out, "encoder.mu", p.encoder.mu);
    add(out, "encoder.log_sigma", p.encoder.log_sigma);
    add(out, "encoder.phi", p.encoder.phi);
  }
  if (all || part == Part::kAttrDecoder) add(out, "attr_decoder", p.attr_decoder);
  if (all || part == Part::kAdversary) add(out, "adversary", p.adversary);
  if (all || part == Part::kAnomalyDecoder) {
    add(out, "anomaly_decoder", p.anomaly_decoder);
    add(out, "anomaly_structure", p.anomaly_structure);
  }
  return out;
}

std::vector<NamedTensor> parameters(BaselineParams& p) {
  std::vector<NamedTensor> out;
  add(out, "baseline.encoder", p.encoder);
  add(out, "baseline.attr_decoder", p.attr_decoder);
  return out;
}

void set_requires_grad(std::span<const NamedTensor> params, bool on) {
  for (const auto& p : params) p.tensor->set_requires_grad(on);
}

Latent encode(Tape& tape, const graph::SparseMatrix& norm_adj, Var x, EncoderParams& p, const Tensor* noise,
              bool deterministic) {
  if (x.cols() != p.shared.in()) {
    throw DimensionError("encode: attributes " + x.shape().str() + " do not match encoder input width " +
                         std::to_string(p.shared.in()));
  }
  if (norm_adj.rows != x.rows()) {
    throw DimensionError("encode: adjacency has " + std::to_string(norm_adj.rows) + " rows, attributes " +
                         std::to_string(x.rows()));
  }
  if (!deterministic && noise == nullptr) throw PreconditionError("encode: noise required in stochastic mode");

  Var h = ops::relu(p.shared.propagate(tape, norm_adj, x));
  Var ah = ops::spmm(norm_adj, h);
  Latent out;
  out.mu = p.mu.forward(tape, ah);
  out.log_sigma = ops::clamp(p.log_sigma.forward(tape, ah), kLogSigmaMin, kLogSigmaMax);
  if (deterministic) {
    out.z_x = out.mu;
  } else {
    if (noise->shape() != out.mu.shape()) {
      throw DimensionError("encode: noise " + noise->shape().str() + " vs latent " + out.mu.shape().str());
    }
    out.z_x = ops::add(out.mu, ops::hadamard(ops::exp(out.log_sigma), tape.constant(*noise)));
  }
  if (p.has_sensitive_head()) out.z_s = p.phi.forward(tape, ah);
  return out;
}

Var join_latent(Var z_x, Var z_s) { return z_s.valid() ? ops::concat_cols(z_x, z_s) : z_x; }

Var decode_attributes(Tape& tape, const graph::SparseMatrix& norm_adj, Var z_x, Var z_s, TwoLayer& p) {
  Var z = join_latent(z_x, z_s);
  if (z.cols() != p.layer1.in()) {
    throw DimensionError("decode_attributes: latent " + z.shape().str() + " vs decoder input width " +
                         std::to_string(p.layer1.in()));
  }
  Var h = ops::relu(p.layer1.propagate(tape, norm_adj, z));
  return p.layer2.propagate(tape, norm_adj, h);
}

Var decode_structure(Var z_x, Var z_s) { return ops::gram(join_latent(z_x, z_s)); }

Var predict_sensitive(Var z_s) {
  if (z_s.cols() != 1) throw DimensionError("predict_sensitive: expected width 1, got " + z_s.shape().str());
  return ops::sigmoid(z_s);
}

Var adversary_logit(Tape& tape, Var z_x, Var z_s, TwoLayer& p) {
  if (z_x.rows() != z_s.rows()) {
    throw DimensionError("adversary_logit: unpaired rows " + z_x.shape().str() + " and " + z_s.shape().str());
  }
  Var z = ops::concat_cols(z_x, z_s);
  if (z.cols() != p.layer1.in()) {
    throw DimensionError("adversary_logit: pair width " + std::to_string(z.cols()) + " vs " +
                         std::to_string(p.layer1.in()));
  }
  return p.layer2.forward(tape, ops::relu(p.layer1.forward(tape, z)));
}

AnomalyDecoding anomaly_decode(Tape& tape, Var z_x_bar, Var z_s_shuffled, TwoLayer& p) {
  Var z = join_latent(z_x_bar, z_s_shuffled);
  if (z.cols() != p.layer1.in()) {
    throw DimensionError("anomaly_decode: input " + z.shape().str() + " vs decoder input width " +
                         std::to_string(p.layer1.in()));
  }
  AnomalyDecoding out;
  out.hidden = ops::relu(p.layer1.forward(tape, z));
  out.x_tilde = p.layer2.forward(tape, out.hidden);
  return out;
}

BaselineOutput baseline_forward(Tape& tape, const graph::SparseMatrix& norm_adj, Var x, BaselineParams& p,
                                bool with_structure) {
  if (x.cols() != p.encoder.layer1.in()) {
    throw DimensionError("baseline_forward: attributes " + x.shape().str() + " vs input width " +
                         std::to_string(p.encoder.layer1.in()));
  }
  BaselineOutput out;
  Var h = ops::relu(p.encoder.layer1.propagate(tape, norm_adj, x));
  out.latent = p.encoder.layer2.propagate(tape, norm_adj, h);
  Var g = ops::relu(p.attr_decoder.layer1.propagate(tape, norm_adj, out.latent));
  out.x_hat = p.attr_decoder.layer2.propagate(tape, norm_adj, g);
  if (with_structure) out.a_logits = ops::gram(out.latent);
  return out;
}

}  // namespace defend::model
