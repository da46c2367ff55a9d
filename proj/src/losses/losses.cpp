#include "defend/losses/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "defend/errors.hpp"

namespace defend::losses {

namespace ops = defend::ad;
using ad::Shape;
using ad::Tape;

namespace {

void require_column(Var v, const char* what) {
  if (v.cols() != 1) throw DimensionError(std::string(what) + ": expected a column, got " + v.shape().str());
}

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": shapes differ, " + a.str() + " vs " + b.str());
}

Var reduce(Var v, Reduction r) { return r == Reduction::kMean ? ops::mean(v) : ops::sum(v); }

struct Centered {
  std::vector<double> c;
  double ss = 0.0;
  bool degenerate = false;
};

Centered center(std::span<const double> a) {
  Centered out;
  const double n = static_cast<double>(a.size());
  const double m = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double raw = 0.0;
  out.c.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.c[i] = a[i] - m;
    out.ss += out.c[i] * out.c[i];
    raw += a[i] * a[i];
  }
  // Rounding leaves tiny residuals on constant input; treat them as zero.
  out.degenerate = out.ss <= 1e-24 * raw || out.ss == 0.0;
  return out;
}

std::array<std::size_t, 2> group_sizes(const Tensor& s, const char* what) {
  std::array<std::size_t, 2> n{0, 0};
  for (double v : s.data()) {
    if (v != 0.0 && v != 1.0) throw DomainError(std::string(what) + ": sensitive values must be 0 or 1");
    ++n[v == 1.0];
  }
  return n;
}

}  // namespace

Var recon_loss(const Tensor& x, Var x_hat, const Tensor& a, Var a_logits, double epsilon_mix,
               Reduction reduction, double* rec_x, double* rec_a) {
  require_same(x.shape(), x_hat.shape(), "recon_loss");
  if (!(epsilon_mix >= 0.0 && epsilon_mix <= 1.0)) throw DomainError("recon_loss: epsilon_mix outside [0, 1]");
  Tape& tape = x_hat.tape();
  Var attr = reduce(ops::square(ops::sub(x_hat, tape.constant(x))), reduction);
  if (rec_x) *rec_x = attr.item();
  if (epsilon_mix == 0.0) {
    if (rec_a) *rec_a = 0.0;
    return ops::scale(attr, 1.0);
  }
  if (!a_logits.valid()) throw PreconditionError("recon_loss: structure logits required when epsilon_mix > 0");
  require_same(a.shape(), a_logits.shape(), "recon_loss");
  Var structure = ops::bce_with_logits(a_logits, a, reduction);
  if (rec_a) *rec_a = structure.item();
  return ops::add(ops::scale(attr, 1.0 - epsilon_mix), ops::scale(structure, epsilon_mix));
}

Var kl_gaussian(Var mu, Var log_sigma, Reduction reduction) {
  require_same(mu.shape(), log_sigma.shape(), "kl_gaussian");
  // sigma^2 = exp(2 log sigma)
  Var per_entry = ops::sub(ops::add(ops::square(mu), ops::exp(ops::scale(log_sigma, 2.0))),
                           ops::add_scalar(ops::scale(log_sigma, 2.0), 1.0));
  Var total = ops::scale(ops::sum(per_entry), 0.5);
  if (reduction == Reduction::kSum) return total;
  return ops::scale(total, 1.0 / static_cast<double>(mu.rows()));
}

Var disentangle_loss(Var logits_true) { return ops::mean(logits_true); }

Var predictiveness_loss(Var logits, const Tensor& s, Reduction reduction) {
  require_same(logits.shape(), s.shape(), "predictiveness_loss");
  return ops::bce_with_logits(logits, s, reduction);
}

Var total_loss(Var rec, Var kl, Var dis, Var pre, const LossWeights& w) {
  Var out = ops::add(rec, kl);
  if (w.gamma != 0.0 && dis.valid()) out = ops::add(out, ops::scale(dis, w.gamma));
  if (w.alpha != 0.0 && pre.valid()) out = ops::add(out, ops::scale(pre, w.alpha));
  return out;
}

Var adversary_loss(Var logits_true, Var logits_fake) {
  if (logits_true.value().empty() || logits_fake.value().empty()) {
    throw PreconditionError("adversary_loss: empty batch");
  }
  // -log sigmoid(l) = softplus(-l); -log(1 - sigmoid(l)) = softplus(l).
  return ops::add(ops::mean(ops::softplus(ops::scale(logits_true, -1.0))), ops::mean(ops::softplus(logits_fake)));
}

Var anomaly_scores(const Tensor& x, Var x_tilde) {
  require_same(x.shape(), x_tilde.shape(), "anomaly_scores");
  return ops::frobenius_sq_rows(ops::sub(x_tilde.tape().constant(x), x_tilde));
}

Var pearson_abs(Var a, Var b) {
  require_column(a, "pearson_abs");
  require_same(a.shape(), b.shape(), "pearson_abs");
  const auto ca = center(a.value().data());
  const auto cb = center(b.value().data());
  if (ca.degenerate || cb.degenerate) {
    return a.tape().record(Tensor::scalar(0.0), {a, b}, [](Tape&, const Tensor&) {});
  }
  const double norm = std::sqrt(ca.ss * cb.ss);
  double dot = 0.0;
  for (std::size_t i = 0; i < ca.c.size(); ++i) dot += ca.c[i] * cb.c[i];
  const double r = dot / norm;
  const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(Tensor::scalar(std::abs(r)), {a, b},
                         [ca, cb, r, norm, sign, ia, ib](Tape& t, const Tensor& g) {
                           const double k = sign * g.item();
                           if (t.requires_grad(ia)) {
                             auto& ga = t.grad(ia);
                             for (std::size_t i = 0; i < ca.c.size(); ++i)
                               ga[i] += k * (cb.c[i] / norm - r * ca.c[i] / ca.ss);
                           }
                           if (t.requires_grad(ib)) {
                             auto& gb = t.grad(ib);
                             for (std::size_t i = 0; i < cb.c.size(); ++i)
                               gb[i] += k * (ca.c[i] / norm - r * cb.c[i] / cb.ss);
                           }
                         });
}

Var correlation_constraint(Var o, Var s_pred) {
  if (o.rows() < 2) throw PreconditionError("correlation_constraint: needs at least 2 nodes");
  return pearson_abs(o, s_pred);
}

Var ad_loss(Var o, Var corr, double beta, Reduction reduction) {
  Var rec = reduce(o, reduction);
  if (!corr.valid()) return rec;
  return ops::add(rec, ops::scale(corr, beta));
}

Var fairod_dp(Var o, const Tensor& s) {
  require_same(o.shape(), s.shape(), "fairod_dp");
  if (o.rows() < 2) throw PreconditionError("fairod_dp: needs at least 2 nodes");
  const auto n = group_sizes(s, "fairod_dp");
  if (n[0] == 0 || n[1] == 0) {
    std::cerr << "warning: fairod_dp on a single sensitive group; returning 0\n";
  }
  return pearson_abs(o, o.tape().constant(s));
}

Var fairod_adcg(Var o, const Tensor& o_base, const Tensor& s) {
  require_column(o, "fairod_adcg");
  require_same(o.shape(), o_base.shape(), "fairod_adcg");
  require_same(o.shape(), s.shape(), "fairod_adcg");
  const auto n = group_sizes(s, "fairod_adcg");
  if (n[0] == 0 || n[1] == 0) throw PreconditionError("fairod_adcg: both sensitive groups must be non-empty");

  const auto ov = o.value().data();
  const std::size_t total = ov.size();
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < total; ++i) members[s[i] == 1.0].push_back(i);

  std::vector<double> gain(total), t_sum(total);
  std::array<double, 2> idcg{0.0, 0.0};
  double value = 0.0;
  for (int g = 0; g < 2; ++g) {
    std::vector<double> base;
    for (std::size_t i : members[g]) {
      gain[i] = std::exp2(o_base[i]) - 1.0;
      base.push_back(gain[i]);
    }
    std::sort(base.begin(), base.end(), std::greater<>());
    for (std::size_t j = 0; j < base.size(); ++j) idcg[g] += base[j] / std::log2(static_cast<double>(j) + 2.0);
    if (!(idcg[g] != 0.0) || !std::isfinite(idcg[g])) {
      throw DomainError("fairod_adcg: ideal DCG of group " + std::to_string(g) + " is " + std::to_string(idcg[g]));
    }
    double acc = 0.0;
    for (std::size_t i : members[g]) {
      double t = 1.0;
      for (std::size_t j : members[g]) t += ops::kernel::sigmoid(ov[j] - ov[i]);
      t_sum[i] = t;
      acc += gain[i] / (std::log2(t) * idcg[g]);
    }
    value += 1.0 - acc;
  }
  const std::size_t io = o.id();
  std::vector<double> ocopy(ov.begin(), ov.end());
  return o.tape().record(
      Tensor::scalar(value), {o},
      [members, gain, t_sum, idcg, ocopy, io](Tape& tape, const Tensor& g) {
        auto& go = tape.grad(io);
        const double up = g.item();
        for (int grp = 0; grp < 2; ++grp) {
          for (std::size_t i : members[grp]) {
            const double lg = std::log2(t_sum[i]);
            // d/dT_i of -gain_i / (log2(T_i) * idcg)
            const double c = up * gain[i] / (idcg[grp] * lg * lg * t_sum[i] * std::log(2.0));
            for (std::size_t j : members[grp]) {
              if (j == i) continue;
              const double sg = ops::kernel::sigmoid(ocopy[j] - ocopy[i]);
              const double ds = sg * (1.0 - sg);
              go[j] += c * ds;
              go[i] -= c * ds;
            }
          }
        }
      });
}

Var correlation_regularizer(Var o, const Tensor& s) {
  require_column(o, "correlation_regularizer");
  require_same(o.shape(), s.shape(), "correlation_regularizer");
  const auto ov = o.value().data();
  double os = 0.0, oo = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < ov.size(); ++i) {
    os += ov[i] * s[i];
    oo += ov[i] * ov[i];
    ss += s[i] * s[i];
  }
  if (oo == 0.0 || ss == 0.0) return o.tape().record(Tensor::scalar(0.0), {o}, [](Tape&, const Tensor&) {});
  const double norm = std::sqrt(oo * ss);
  const double c = os / norm;
  const double sign = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
  const std::size_t io = o.id();
  std::vector<double> ocopy(ov.begin(), ov.end());
  std::vector<double> scopy(s.data().begin(), s.data().end());
  return o.tape().record(Tensor::scalar(std::abs(c)), {o},
                         [ocopy, scopy, norm, c, oo, sign, io](Tape& t, const Tensor& g) {
                           auto& go = t.grad(io);
                           const double k = sign * g.item();
                           for (std::size_t i = 0; i < ocopy.size(); ++i)
                             go[i] += k * (scopy[i] / norm - c * ocopy[i] / oo);
                         });
}

Var hin_dp(Var probs, const Tensor& s) {
  require_column(probs, "hin_dp");
  require_same(probs.shape(), s.shape(), "hin_dp");
  const auto n = group_sizes(s, "hin_dp");
  if (n[0] == 0 || n[1] == 0) throw PreconditionError("hin_dp: both sensitive groups must be non-empty");
  // gap = mean_{s=1} p - mean_{s=0} p; the k = 0 term is (-gap)^2.
  Tensor w(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) {
    w[i] = s[i] == 1.0 ? 1.0 / static_cast<double>(n[1]) : -1.0 / static_cast<double>(n[0]);
  }
  Var gap = ops::sum(ops::hadamard(probs, probs.tape().constant(std::move(w))));
  Var one_minus = ops::scale(gap, -1.0);
  return ops::add(ops::square(gap), ops::square(one_minus));
}

Var standardize(Var a) {
  require_column(a, "standardize");
  const auto ca = center(a.value().data());
  const double n = static_cast<double>(ca.c.size());
  Tensor y(a.shape());
  if (ca.degenerate) return a.tape().record(std::move(y), {a}, [](Tape&, const Tensor&) {});
  const double sd = std::sqrt(ca.ss / n);
  for (std::size_t i = 0; i < ca.c.size(); ++i) y[i] = ca.c[i] / sd;
  const std::size_t ia = a.id();
  std::vector<double> ys(y.data().begin(), y.data().end());
  return a.tape().record(std::move(y), {a}, [ys, sd, n, ia](Tape& t, const Tensor& g) {
    double mg = 0.0, mgy = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      mg += g[i];
      mgy += g[i] * ys[i];
    }
    mg /= n;
    mgy /= n;
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < ys.size(); ++i) ga[i] += (g[i] - mg - ys[i] * mgy) / sd;
  });
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("pearson: lengths differ");
  if (a.size() < 2) throw PreconditionError("pearson: needs at least 2 values");
  const auto ca = center(a);
  const auto cb = center(b);
  if (ca.degenerate || cb.degenerate) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < ca.c.size(); ++i) dot += ca.c[i] * cb.c[i];
  return dot / std::sqrt(ca.ss * cb.ss);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: lengths differ");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace defend::losses
