#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "defend/autodiff/tensor.hpp"
#include "defend/graph/sparse.hpp"

namespace defend::graph {

// G = (V, A, X, S) with optional anomaly labels y used only for evaluation.
struct AttributedGraph {
  std::size_t n_nodes = 0;
  SparseMatrix adjacency;
  ad::Tensor attributes;
  std::vector<std::uint8_t> sensitive;
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t n_attrs() const { return attributes.cols(); }
  std::size_t n_edges() const { return adjacency.nnz() / 2; }

  // Throws DataError unless adjacency is a symmetric binary N x N matrix
  // with empty diagonal and S, y, X all have N rows of binary/finite values.
  void validate() const;

  friend bool operator==(const AttributedGraph& a, const AttributedGraph& b) {
    return a.n_nodes == b.n_nodes && a.adjacency == b.adjacency && a.attributes == b.attributes &&
           a.sensitive == b.sensitive && a.labels == b.labels;
  }
};

// Population standard deviation over all given entries.
double matrix_std(std::span<const double> values);
// Population standard deviation over all rows*cols entries, zeros included.
double matrix_std(const SparseMatrix& m);

// Mix between structure and attribute reconstruction:
// sigma_X / (sigma_X + sigma_A). Zero when both deviations vanish.
double structure_weight(const AttributedGraph& g);

// Sensitive / label vector as an N x 1 tensor of 0.0 / 1.0.
ad::Tensor as_column(std::span<const std::uint8_t> bits);

}  // namespace defend::graph
