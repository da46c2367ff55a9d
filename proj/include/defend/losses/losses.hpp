#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "defend/autodiff/ops.hpp"

namespace defend::losses {

using ad::Reduction;
using ad::Tensor;
using ad::Var;

struct LossWeights {
  double alpha = 2.5;
  double gamma = 1.0;
  double beta = 10.0;
  // Structure/attribute mix; derived from the graph, stored for audit.
  double epsilon_mix = 0.0;
};

// One step's terms. Terms not computed in a run stay NaN.
struct LossReport {
  double rec_x = 0.0;
  double rec_a = 0.0;
  double kl = 0.0;
  double dis = 0.0;
  double pre = 0.0;
  double adv = 0.0;
  double corr = 0.0;
  double total = 0.0;
};

// (1 - eps) * squared error on X + eps * BCE on A. a_logits may be invalid
// when eps == 0. Returns the combined loss; the parts are written to
// rec_x / rec_a when given.
Var recon_loss(const Tensor& x, Var x_hat, const Tensor& a, Var a_logits, double epsilon_mix,
               Reduction reduction = Reduction::kMean, double* rec_x = nullptr, double* rec_a = nullptr);

// (1/N) sum 0.5 (mu^2 + sigma^2 - 1 - 2 log sigma); the sum reduction
// drops the 1/N.
Var kl_gaussian(Var mu, Var log_sigma, Reduction reduction = Reduction::kMean);

// Mean adversary logit over true pairs.
Var disentangle_loss(Var logits_true);

// Mean BCE between s and sigmoid(logits).
Var predictiveness_loss(Var logits, const Tensor& s, Reduction reduction = Reduction::kMean);

Var total_loss(Var rec, Var kl, Var dis, Var pre, const LossWeights& w);

// -mean log sigmoid(l_true) - mean log(1 - sigmoid(l_fake)).
Var adversary_loss(Var logits_true, Var logits_fake);

// Row-wise squared error, N x 1.
Var anomaly_scores(const Tensor& x, Var x_tilde);

// |Pearson(a, b)| on column vectors; 0 (with zero gradient) when either
// has no variance.
Var pearson_abs(Var a, Var b);

// |Pearson(o, s_pred)|; requires N >= 2.
Var correlation_constraint(Var o, Var s_pred);

// mean(o) + beta * corr (sum(o) under the sum reduction).
Var ad_loss(Var o, Var corr, double beta, Reduction reduction = Reduction::kMean);

// |Pearson(o, s)|; single-group input yields 0 and a warning on stderr.
Var fairod_dp(Var o, const Tensor& s);

// Group-fidelity surrogate against fixed base scores. o_base and s must
// outlive the tape. Throws PreconditionError when a group is empty.
Var fairod_adcg(Var o, const Tensor& o_base, const Tensor& s);

// |o . s| / sqrt((o . o)(s . s)); 0 when either vector is zero.
Var correlation_regularizer(Var o, const Tensor& s);

// sum over k in {0,1} of the squared gap in group means of P(y_hat = k).
Var hin_dp(Var probs, const Tensor& s);

// (a - mean) / std with population std; zeros when a is constant.
Var standardize(Var a);

// Plain-value helpers.
double pearson(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace defend::losses
