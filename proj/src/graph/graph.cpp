#include "defend/graph/graph.hpp"

#include <cmath>
#include <string>

#include "defend/errors.hpp"

namespace defend::graph {

void AttributedGraph::validate() const {
  if (adjacency.rows != n_nodes || adjacency.cols != n_nodes) {
    throw DataError("graph: adjacency is not " + std::to_string(n_nodes) + "x" +
                    std::to_string(n_nodes));
  }
  adjacency.validate();
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (adjacency.contains(i, i)) throw DataError("graph: self-loop at node " + std::to_string(i));
  }
  for (double v : adjacency.values) {
    if (v != 1.0) throw DataError("graph: adjacency must be binary");
  }
  if (!adjacency.is_symmetric()) throw DataError("graph: adjacency is not symmetric");
  if (attributes.rows() != n_nodes) throw DataError("graph: attribute rows differ from node count");
  if (!attributes.all_finite()) throw DataError("graph: non-finite attribute value");
  if (sensitive.size() != n_nodes) throw DataError("graph: sensitive vector length differs from N");
  for (auto s : sensitive) {
    if (s > 1) throw DataError("graph: sensitive value must be 0 or 1");
  }
  if (labels) {
    if (labels->size() != n_nodes) throw DataError("graph: label vector length differs from N");
    for (auto y : *labels) {
      if (y > 1) throw DataError("graph: label must be 0 or 1");
    }
  }
}

double matrix_std(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("matrix_std: empty input");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

double matrix_std(const SparseMatrix& m) {
  const double count = static_cast<double>(m.rows) * static_cast<double>(m.cols);
  if (count == 0.0) throw PreconditionError("matrix_std: empty input");
  double sum = 0.0;
  for (double v : m.values) sum += v;
  const double mean = sum / count;
  double var = (count - static_cast<double>(m.nnz())) * mean * mean;
  for (double v : m.values) var += (v - mean) * (v - mean);
  return std::sqrt(var / count);
}

double structure_weight(const AttributedGraph& g) {
  const double sx = matrix_std(g.attributes.data());
  const double sa = matrix_std(g.adjacency);
  if (sx + sa == 0.0) return 0.0;
  return sx / (sx + sa);
}

ad::Tensor as_column(std::span<const std::uint8_t> bits) {
  ad::Tensor t({bits.size(), 1});
  for (std::size_t i = 0; i < bits.size(); ++i) t[i] = bits[i] ? 1.0 : 0.0;
  return t;
}

}  // namespace defend::graph
