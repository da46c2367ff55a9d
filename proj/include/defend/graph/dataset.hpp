#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "defend/graph/graph.hpp"

namespace defend::graph {

// On-disk dataset directory:
//   edges.tsv  two tab-separated 0-based node ids per line, '#' comments
//   nodes.csv  header id,s,y,x_0,...,x_{d-1}; y empty when unlabeled
//   meta.json  {"n_nodes", "n_attrs", "seed", "generator_config"}
// meta.json is optional on load; when present its sizes must agree.
struct DatasetMeta {
  std::uint64_t seed = 0;
  nlohmann::json generator_config = nlohmann::json::object();
};

void save_dataset(const AttributedGraph& g, const std::filesystem::path& dir,
                  const DatasetMeta& meta = {});

AttributedGraph load_dataset(const std::filesystem::path& dir);

// Contents of meta.json, or an empty object when the file is absent.
nlohmann::json load_meta(const std::filesystem::path& dir);

}  // namespace defend::graph
