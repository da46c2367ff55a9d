#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "defend/autodiff/ops.hpp"
#include "defend/graph/sparse.hpp"
#include "defend/rng.hpp"

namespace defend::model {

using ad::Tape;
using ad::Tensor;
using ad::Var;

// Affine layer y = x W + b with W (in x out) and b (1 x out).
struct Linear {
  Tensor weight;
  Tensor bias;

  // Glorot-uniform weights, zero bias.
  static Linear glorot(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }

  Var forward(Tape& tape, Var x);
  // Graph convolution: (adj x) W + b.
  Var propagate(Tape& tape, const graph::SparseMatrix& adj, Var x);
};

struct Dims {
  std::size_t n_attrs = 0;
  std::size_t hidden = 64;
  std::size_t latent = 64;
};

// Shared layer followed by the mu / log-sigma heads and, unless the model
// is a vanilla VGAE, the deterministic sensitive head phi (width 1).
struct EncoderParams {
  Linear shared;
  Linear mu;
  Linear log_sigma;
  Linear phi;
  bool has_sensitive_head() const { return !phi.weight.empty(); }
};

struct TwoLayer {
  Linear layer1;
  Linear layer2;
};

struct ModelParams {
  EncoderParams encoder;
  TwoLayer attr_decoder;     // two propagation layers back to d
  TwoLayer adversary;        // MLP on (z_x, z_s) pairs to one logit
  TwoLayer anomaly_decoder;  // MLP on (z_x, shuffled z_s) to d
  // Present only for the structure-augmented variant: projects the anomaly
  // decoder's hidden layer before a dot-product structure decoder.
  Linear anomaly_structure;
};

// DOMINANT-style autoencoder: GCN encoder, GCN attribute decoder and a
// dot-product structure decoder on the single latent.
struct BaselineParams {
  TwoLayer encoder;
  TwoLayer attr_decoder;
};

struct ModelOptions {
  bool sensitive_head = true;
  bool anomaly_structure = false;
};

ModelParams init_model(const Dims& dims, const ModelOptions& options, Rng& rng);
BaselineParams init_baseline(const Dims& dims, Rng& rng);

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

enum class Part { kEncoder, kAttrDecoder, kAdversary, kAnomalyDecoder, kAll };

// Non-empty parameter tensors of a part, in a fixed order.
std::vector<NamedTensor> parameters(ModelParams& p, Part part);
std::vector<NamedTensor> parameters(BaselineParams& p);

void set_requires_grad(std::span<const NamedTensor> params, bool on);

// Latent sample. z_s is invalid when the encoder has no sensitive head.
struct Latent {
  Var z_x;
  Var z_s;
  Var mu;
  Var log_sigma;
};

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 10.0;

// noise (N x latent) is required unless deterministic.
Latent encode(Tape& tape, const graph::SparseMatrix& norm_adj, Var x, EncoderParams& p,
              const Tensor* noise, bool deterministic);

// Concatenation of z_x with z_s, or z_x alone when z_s is invalid.
Var join_latent(Var z_x, Var z_s);

Var decode_attributes(Tape& tape, const graph::SparseMatrix& norm_adj, Var z_x, Var z_s, TwoLayer& p);

// Raw logits Z Z^T for Z = [z_x, z_s].
Var decode_structure(Var z_x, Var z_s);

Var predict_sensitive(Var z_s);

Var adversary_logit(Tape& tape, Var z_x, Var z_s, TwoLayer& p);

struct AnomalyDecoding {
  Var x_tilde;
  Var hidden;
};

// Row-local MLP; no graph propagation.
AnomalyDecoding anomaly_decode(Tape& tape, Var z_x_bar, Var z_s_shuffled, TwoLayer& p);

struct BaselineOutput {
  Var x_hat;
  Var a_logits;
  Var latent;
};

BaselineOutput baseline_forward(Tape& tape, const graph::SparseMatrix& norm_adj, Var x, BaselineParams& p,
                                bool with_structure = true);

}  // namespace defend::model
