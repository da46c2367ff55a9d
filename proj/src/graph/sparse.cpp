#include "defend/graph/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "defend/errors.hpp"

namespace defend::graph {

void SparseMatrix::validate() const {
  if (row_ptr.size() != rows + 1 || row_ptr.front() != 0) {
    throw DataError("csr: row_ptr must have rows+1 entries starting at 0");
  }
  if (row_ptr.back() != col_idx.size() || col_idx.size() != values.size()) {
    throw DataError("csr: row_ptr[rows], col_idx and values lengths disagree");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (row_ptr[i] > row_ptr[i + 1]) throw DataError("csr: row_ptr decreases at row " + std::to_string(i));
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
      if (col_idx[p] >= cols) throw DataError("csr: column index out of range in row " + std::to_string(i));
      if (p > row_ptr[i] && col_idx[p] <= col_idx[p - 1]) {
        throw DataError("csr: column indices not strictly increasing in row " + std::to_string(i));
      }
    }
  }
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  const auto first = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto last = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return values[static_cast<std::size_t>(it - col_idx.begin())];
}

bool SparseMatrix::contains(std::size_t i, std::size_t j) const {
  const auto first = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto last = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  return std::binary_search(first, last, j);
}

bool SparseMatrix::is_symmetric() const {
  if (rows != cols) return false;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
      const std::size_t j = col_idx[p];
      if (!contains(j, i) || at(j, i) != values[p]) return false;
    }
  }
  return true;
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) out[i * cols + col_idx[p]] = values[p];
  }
  return out;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.resize(n + 1);
  m.col_idx.resize(n);
  m.values.assign(n, 1.0);
  for (std::size_t i = 0; i <= n; ++i) m.row_ptr[i] = i;
  for (std::size_t i = 0; i < n; ++i) m.col_idx[i] = i;
  return m;
}

SparseMatrix build_csr(const std::vector<Edge>& edges, std::size_t n) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [i, j] : edges) {
    if (i >= n || j >= n) {
      throw DataError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                      ") out of range for " + std::to_string(n) + " nodes");
    }
    if (i == j) continue;
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    m.row_ptr[i + 1] = m.row_ptr[i] + row.size();
    m.col_idx.insert(m.col_idx.end(), row.begin(), row.end());
  }
  m.values.assign(m.col_idx.size(), 1.0);
  return m;
}

std::vector<Edge> upper_edges(const SparseMatrix& adjacency) {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < adjacency.rows; ++i) {
    for (std::size_t p = adjacency.row_ptr[i]; p < adjacency.row_ptr[i + 1]; ++p) {
      if (adjacency.col_idx[p] > i) out.emplace_back(i, adjacency.col_idx[p]);
    }
  }
  return out;
}

SparseMatrix symmetric_normalize(const SparseMatrix& adjacency) {
  const std::size_t n = adjacency.rows;
  if (adjacency.cols != n) throw DimensionError("symmetric_normalize: adjacency must be square");
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;  // self-loop
    for (std::size_t p = adjacency.row_ptr[i]; p < adjacency.row_ptr[i + 1]; ++p) {
      if (adjacency.col_idx[p] != i) deg += adjacency.values[p];
    }
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  SparseMatrix out;
  out.rows = out.cols = n;
  out.row_ptr.assign(n + 1, 0);
  out.col_idx.reserve(adjacency.nnz() + n);
  out.values.reserve(adjacency.nnz() + n);
  for (std::size_t i = 0; i < n; ++i) {
    bool diag_done = false;
    auto emit_diag = [&] {
      out.col_idx.push_back(i);
      out.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
      diag_done = true;
    };
    for (std::size_t p = adjacency.row_ptr[i]; p < adjacency.row_ptr[i + 1]; ++p) {
      const std::size_t j = adjacency.col_idx[p];
      if (j == i) continue;
      if (!diag_done && j > i) emit_diag();
      out.col_idx.push_back(j);
      out.values.push_back(adjacency.values[p] * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    if (!diag_done) emit_diag();
    out.row_ptr[i + 1] = out.col_idx.size();
  }
  return out;
}

}  // namespace defend::graph
