#include "defend/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "defend/errors.hpp"

namespace defend::ad {

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

void require_nonempty(const char* op, const Var& a) {
  if (a.value().empty()) throw PreconditionError(std::string(op) + ": empty tensor");
}

Tensor transpose(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

// c[i,:] += sum_k a[i,k] * b[k,:], k ascending. The fixed accumulation order
// is what makes spmm and matmul on a densified operand agree bitwise.
void gemm_accumulate(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// da += g * b^T
void gemm_a_bt_accumulate(const Tensor& g, const Tensor& b, Tensor& da) {
  gemm_accumulate(g, transpose(b), da);
}

// db += a^T * g
void gemm_at_b_accumulate(const Tensor& a, const Tensor& g, Tensor& db) {
  const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      double* drow = db.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
    }
  }
}

template <typename F, typename D>
Var unary(Var a, F forward, D derivative) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = forward(x[k]);
  const std::size_t ia = a.id();
  const std::size_t io = a.tape().size();
  return a.tape().record(std::move(out), {a}, [ia, io, derivative](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(io);
    Tensor& dx = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) dx[k] += g[k] * derivative(xv[k], yv[k]);
  });
}

}  // namespace

namespace kernel {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape().str() + " x " +
                         b.shape().str());
  }
  Tensor c({a.rows(), b.cols()}, 0.0);
  gemm_accumulate(a, b, c);
  return c;
}

Tensor spmm(const graph::SparseMatrix& s, const Tensor& d) {
  if (s.cols != d.rows()) {
    throw DimensionError("spmm: sparse (" + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                         ") x dense " + d.shape().str());
  }
  const std::size_t n = d.cols();
  Tensor c({s.rows, n}, 0.0);
  for (std::size_t i = 0; i < s.rows; ++i) {
    double* crow = c.data().data() + i * n;
    for (std::size_t p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
      const double v = s.values[p];
      const double* drow = d.data().data() + s.col_idx[p] * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += v * drow[j];
    }
  }
  return c;
}

Tensor densify(const graph::SparseMatrix& s) { return Tensor({s.rows, s.cols}, s.to_dense()); }

}  // namespace kernel

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  const std::size_t n = perm.size();
  std::vector<std::size_t> inv(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (perm[i] >= n || inv[perm[i]] != n) {
      throw PreconditionError("permute_rows: not a permutation (index " + std::to_string(perm[i]) +
                              " at position " + std::to_string(i) + ")");
    }
    inv[perm[i]] = i;
  }
  return inv;
}

Var matmul(Var a, Var b) {
  Tensor out = kernel::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) gemm_a_bt_accumulate(g, t.value(ib), t.grad(ia));
    if (t.requires_grad(ib)) gemm_at_b_accumulate(t.value(ia), g, t.grad(ib));
  });
}

Var spmm(const graph::SparseMatrix& s, Var d) {
  Tensor out = kernel::spmm(s, d.value());
  const std::size_t id = d.id();
  const graph::SparseMatrix* sp = &s;
  return d.tape().record(std::move(out), {d}, [sp, id](Tape& t, const Tensor& g) {
    Tensor& dd = t.grad(id);
    const std::size_t n = g.cols();
    for (std::size_t i = 0; i < sp->rows; ++i) {
      const double* grow = g.data().data() + i * n;
      for (std::size_t p = sp->row_ptr[i]; p < sp->row_ptr[i + 1]; ++p) {
        const double v = sp->values[p];
        double* drow = dd.data().data() + sp->col_idx[p] * n;
        for (std::size_t j = 0; j < n; ++j) drow[j] += v * grow[j];
      }
    }
  });
}

Var gram(Var z) {
  const Tensor& zv = z.value();
  const std::size_t n = zv.rows(), h = zv.cols();
  const Tensor zt = transpose(zv);
  Tensor out({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = out.data().data() + i * n;
    for (std::size_t p = 0; p < h; ++p) {
      const double av = zv(i, p);
      const double* trow = zt.data().data() + p * n;
      for (std::size_t j = i; j < n; ++j) crow[j] += av * trow[j];
    }
    for (std::size_t j = 0; j < i; ++j) crow[j] = out(j, i);
  }
  const std::size_t iz = z.id();
  return z.tape().record(std::move(out), {z}, [iz](Tape& t, const Tensor& g) {
    const std::size_t rows = g.rows();
    Tensor sym({rows, rows});
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < rows; ++j) sym(i, j) = g(i, j) + g(j, i);
    }
    gemm_accumulate(sym, t.value(iz), t.grad(iz));
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.value()[k] + b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.value()[k] - b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) {
      Tensor& db = t.grad(ib);
      for (std::size_t k = 0; k < g.size(); ++k) db[k] -= g[k];
    }
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape("hadamard", a, b);
  Tensor out(a.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.value()[k] * b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& da = t.grad(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t k = 0; k < g.size(); ++k) da[k] += g[k] * bv[k];
    }
    if (t.requires_grad(ib)) {
      Tensor& db = t.grad(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t k = 0; k < g.size(); ++k) db[k] += g[k] * av[k];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var add_bias(Var x, Var bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_bias: bias " + bias.shape().str() + " does not broadcast over " +
                         x.shape().str());
  }
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) = xv(i, j) + bv[j];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, bias}, [ix, ib](Tape& t, const Tensor& g) {
    t.accumulate(ix, g);
    if (t.requires_grad(ib)) {
      Tensor& db = t.grad(ib);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) db[j] += g(i, j);
      }
    }
  });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return kernel::sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return kernel::softplus(x); },
               [](double x, double) { return kernel::sigmoid(x); });
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw PreconditionError("clamp: lo > hi");
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  require_nonempty("sum", a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& da = t.grad(ia);
    for (std::size_t k = 0; k < da.size(); ++k) da[k] += g[0];
  });
}

Var mean(Var a) {
  require_nonempty("mean", a);
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_sum(Var a) {
  require_nonempty("row_sum", a);
  const Tensor& x = a.value();
  Tensor out({x.rows(), 1}, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out[i] += x(i, j);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& da = t.grad(ia);
    for (std::size_t i = 0; i < da.rows(); ++i) {
      for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += g[i];
    }
  });
}

Var frobenius_sq_rows(Var a) {
  require_nonempty("frobenius_sq_rows", a);
  const Tensor& x = a.value();
  Tensor out({x.rows(), 1}, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out[i] += x(i, j) * x(i, j);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ia);
    Tensor& da = t.grad(ia);
    for (std::size_t i = 0; i < da.rows(); ++i) {
      for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += 2.0 * xv(i, j) * g[i];
    }
  });
}

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + a.shape().str() + " and " +
                         b.shape().str());
  }
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  Tensor out({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < q; ++j) out(i, p + j) = b.value()(i, j);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, p, q](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& da = t.grad(ia);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < p; ++j) da(i, j) += g(i, j);
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& db = t.grad(ib);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < q; ++j) db(i, j) += g(i, p + j);
      }
    }
  });
}

Var permute_rows(Var x, std::span<const std::size_t> perm) {
  if (perm.size() != x.rows()) {
    throw PreconditionError("permute_rows: permutation of length " + std::to_string(perm.size()) +
                            " for " + std::to_string(x.rows()) + " rows");
  }
  inverse_permutation(perm);  // validates
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(perm[i] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const std::size_t ix = x.id();
  std::vector<std::size_t> p(perm.begin(), perm.end());
  return x.tape().record(std::move(out), {x}, [ix, p = std::move(p), d](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad(ix);
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) dx(p[i], j) += g(i, j);
    }
  });
}

Var detach(Var a) { return a.tape().constant(Tensor(a.shape(), a.value().storage())); }

Var bce_with_logits(Var logits, const Tensor& target, Reduction reduction) {
  if (logits.shape() != target.shape()) {
    throw DimensionError("bce_with_logits: logits " + logits.shape().str() + " vs target " +
                         target.shape().str());
  }
  require_nonempty("bce_with_logits", logits);
  const Tensor& l = logits.value();
  double total = 0.0;
  for (std::size_t k = 0; k < l.size(); ++k) total += kernel::softplus(l[k]) - target[k] * l[k];
  const double norm = reduction == Reduction::kMean ? 1.0 / static_cast<double>(l.size()) : 1.0;
  const std::size_t il = logits.id();
  const Tensor* tp = &target;
  return logits.tape().record(Tensor::scalar(total * norm), {logits},
                              [il, tp, norm](Tape& t, const Tensor& g) {
                                const Tensor& lv = t.value(il);
                                Tensor& dl = t.grad(il);
                                const double w = g[0] * norm;
                                for (std::size_t k = 0; k < lv.size(); ++k) {
                                  dl[k] += w * (kernel::sigmoid(lv[k]) - (*tp)[k]);
                                }
                              });
}

}  // namespace defend::ad
