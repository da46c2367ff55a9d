#include "defend/graph/dataset.hpp"

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "defend/errors.hpp"
#include "defend/io.hpp"

namespace defend::graph {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  return lines;
}

std::string where(const char* file, std::size_t line) {
  return std::string(file) + " row " + std::to_string(line);
}

}  // namespace

void save_dataset(const AttributedGraph& g, const fs::path& dir, const DatasetMeta& meta) {
  g.validate();
  fs::create_directories(dir);

  std::string edges = "# undirected edges, one per line\n";
  for (const auto& [i, j] : upper_edges(g.adjacency)) {
    edges += std::to_string(i) + '\t' + std::to_string(j) + '\n';
  }
  write_file_atomic(dir / "edges.tsv", edges);

  std::string nodes = "id,s,y";
  for (std::size_t j = 0; j < g.n_attrs(); ++j) nodes += ",x_" + std::to_string(j);
  nodes += '\n';
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    nodes += std::to_string(i) + ',' + std::to_string(g.sensitive[i]) + ',';
    if (g.labels) nodes += std::to_string((*g.labels)[i]);
    for (std::size_t j = 0; j < g.n_attrs(); ++j) {
      nodes += ',';
      nodes += format_double(g.attributes(i, j));
    }
    nodes += '\n';
  }
  write_file_atomic(dir / "nodes.csv", nodes);

  nlohmann::json m;
  m["n_nodes"] = g.n_nodes;
  m["n_attrs"] = g.n_attrs();
  m["seed"] = meta.seed;
  m["generator_config"] = meta.generator_config;
  write_file_atomic(dir / "meta.json", m.dump(2) + "\n");
}

nlohmann::json load_meta(const fs::path& dir) {
  const auto path = dir / "meta.json";
  if (!fs::exists(path)) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("meta.json: " + std::string(e.what()));
  }
}

AttributedGraph load_dataset(const fs::path& dir) {
  const auto nodes_path = dir / "nodes.csv";
  const auto edges_path = dir / "edges.tsv";
  if (!fs::exists(nodes_path)) throw DataError("missing file " + nodes_path.string());
  if (!fs::exists(edges_path)) throw DataError("missing file " + edges_path.string());

  const std::string node_text = read_file(nodes_path);
  const auto node_lines = lines_of(node_text);
  if (node_lines.empty()) throw DataError("nodes.csv: missing header");
  const auto header = split(node_lines[0], ',');
  if (header.size() < 3 || header[0] != "id" || header[1] != "s" || header[2] != "y") {
    throw DataError("nodes.csv row 1: header must start with id,s,y");
  }
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[3 + j] != "x_" + std::to_string(j)) {
      throw DataError("nodes.csv row 1: expected column x_" + std::to_string(j));
    }
  }

  AttributedGraph g;
  g.n_nodes = node_lines.size() - 1;
  g.attributes = ad::Tensor({g.n_nodes, d});
  g.sensitive.resize(g.n_nodes);
  std::vector<std::uint8_t> labels(g.n_nodes);
  std::size_t labeled = 0;
  for (std::size_t r = 0; r < g.n_nodes; ++r) {
    const std::size_t line_no = r + 2;
    const auto fields = split(node_lines[r + 1], ',');
    if (fields.size() != d + 3) {
      throw DataError(where("nodes.csv", line_no) + ": expected " + std::to_string(d + 3) +
                      " fields, got " + std::to_string(fields.size()));
    }
    const auto id = parse_int(fields[0], where("nodes.csv", line_no) + " id");
    if (id != static_cast<long long>(r)) {
      throw DataError(where("nodes.csv", line_no) + ": id " + std::to_string(id) +
                      " out of order (expected " + std::to_string(r) + ")");
    }
    const auto s = parse_int(fields[1], where("nodes.csv", line_no) + " s");
    if (s != 0 && s != 1) {
      throw DataError(where("nodes.csv", line_no) + ": sensitive value must be 0 or 1, got " +
                      std::to_string(s));
    }
    g.sensitive[r] = static_cast<std::uint8_t>(s);
    if (!fields[2].empty()) {
      const auto y = parse_int(fields[2], where("nodes.csv", line_no) + " y");
      if (y != 0 && y != 1) {
        throw DataError(where("nodes.csv", line_no) + ": label must be 0, 1 or empty, got " +
                        std::to_string(y));
      }
      labels[r] = static_cast<std::uint8_t>(y);
      ++labeled;
    }
    for (std::size_t j = 0; j < d; ++j) {
      g.attributes(r, j) = parse_double(fields[3 + j], where("nodes.csv", line_no) + " x_" + std::to_string(j));
    }
  }
  if (labeled == g.n_nodes && g.n_nodes > 0) {
    g.labels = std::move(labels);
  } else if (labeled != 0) {
    throw DataError("nodes.csv: labels present for only " + std::to_string(labeled) + " of " +
                    std::to_string(g.n_nodes) + " nodes");
  }

  const std::string edge_text = read_file(edges_path);
  const auto edge_lines = lines_of(edge_text);
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < edge_lines.size(); ++r) {
    const auto line = edge_lines[r];
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) throw DataError(where("edges.tsv", r + 1) + ": expected two tab-separated ids");
    const auto i = parse_int(fields[0], where("edges.tsv", r + 1));
    const auto j = parse_int(fields[1], where("edges.tsv", r + 1));
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= g.n_nodes ||
        static_cast<std::size_t>(j) >= g.n_nodes) {
      throw DataError(where("edges.tsv", r + 1) + ": node id out of range for " +
                      std::to_string(g.n_nodes) + " nodes in nodes.csv");
    }
    edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  g.adjacency = build_csr(edges, g.n_nodes);

  const auto meta = load_meta(dir);
  if (meta.contains("n_nodes") && meta["n_nodes"].get<std::size_t>() != g.n_nodes) {
    throw DataError("meta.json n_nodes = " + meta["n_nodes"].dump() + " but nodes.csv has " +
                    std::to_string(g.n_nodes) + " rows");
  }
  if (meta.contains("n_attrs") && meta["n_attrs"].get<std::size_t>() != d) {
    throw DataError("meta.json n_attrs = " + meta["n_attrs"].dump() + " but nodes.csv has " +
                    std::to_string(d) + " attribute columns");
  }
  g.validate();
  return g;
}

}  // namespace defend::graph
