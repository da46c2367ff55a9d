#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace defend::graph {

// Compressed sparse row matrix. Column indices are strictly increasing
// within each row.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return col_idx.size(); }

  // Throws DataError when the CSR invariants do not hold.
  void validate() const;

  // Value at (i, j), zero when absent.
  double at(std::size_t i, std::size_t j) const;
  bool contains(std::size_t i, std::size_t j) const;
  std::size_t row_nnz(std::size_t i) const { return row_ptr[i + 1] - row_ptr[i]; }

  bool is_symmetric() const;

  // Row-major dense copy (rows * cols values).
  std::vector<double> to_dense() const;

  static SparseMatrix identity(std::size_t n);

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;
};

using Edge = std::pair<std::size_t, std::size_t>;

// Symmetric, deduplicated, diagonal-free binary adjacency from an edge list.
SparseMatrix build_csr(const std::vector<Edge>& edges, std::size_t n);

// Each undirected edge once, as (i, j) with i < j, in row-major order.
std::vector<Edge> upper_edges(const SparseMatrix& adjacency);

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
SparseMatrix symmetric_normalize(const SparseMatrix& adjacency);

}  // namespace defend::graph
