#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "defend/autodiff/tape.hpp"
#include "defend/graph/sparse.hpp"

namespace defend::ad {

enum class Reduction { kMean, kSum };

// Linear algebra.
Var matmul(Var a, Var b);
// s must outlive the tape; gradient flows to d only.
Var spmm(const graph::SparseMatrix& s, Var d);
// z * z^T, bitwise symmetric.
Var gram(Var z);

// Elementwise. Shapes must match, except add_bias which broadcasts a 1 x c
// row vector over every row.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
Var add_bias(Var x, Var bias);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softplus(Var a);
Var clamp(Var a, double lo, double hi);

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var frobenius_sq_rows(Var a);

// Structural.
Var concat_cols(Var a, Var b);
Var permute_rows(Var x, std::span<const std::size_t> perm);
Var detach(Var a);

// Binary cross-entropy on raw logits against a fixed target of the same
// shape, fused for stability: softplus(l) - t * l per entry. The target
// must outlive the tape.
Var bce_with_logits(Var logits, const Tensor& target, Reduction reduction = Reduction::kMean);

// Plain kernels, exposed for tests and for callers that need no tape.
namespace kernel {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor spmm(const graph::SparseMatrix& s, const Tensor& d);
Tensor densify(const graph::SparseMatrix& s);
double sigmoid(double x);
double softplus(double x);
}  // namespace kernel

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

}  // namespace defend::ad
