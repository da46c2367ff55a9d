#include "defend/app/config.hpp"

#include <cmath>

#include "defend/errors.hpp"
#include "defend/io.hpp"
#include "defend/json_fields.hpp"
#include "defend/model/checkpoint.hpp"

namespace defend::app {

using nlohmann::json;

namespace {

std::string pointer_of(const std::string& dotted) {
  std::string p = "/" + dotted;
  for (auto& c : p) c = c == '.' ? '/' : c;
  return p;
}

}  // namespace

void RunConfig::validate() const {
  generator.validate();
  train.validate();
  baseline.validate();
  if (eval.contamination && !(*eval.contamination >= 0.0 && *eval.contamination <= 1.0)) {
    throw ConfigError("eval.contamination: must be in [0, 1]");
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
}

std::uint64_t RunConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return model::config_hash(j);
}

json RunConfig::to_json() const {
  json j;
  j["generator"] = generator.to_json();
  j["train"] = train.to_json();
  j["weights"] = training::weights_to_json(train.weights);
  j["baseline"] = baseline.to_json();
  j["eval"] = {{"contamination", eval.contamination ? json(*eval.contamination) : json(nullptr)}};
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig rc;
  JsonFields f(j, "");
  if (const json* g = f.get("generator")) rc.generator = synth::GeneratorConfig::from_json(*g, "generator");
  if (const json* t = f.get("train")) rc.train = training::TrainConfig::from_json(*t, "train");
  if (const json* w = f.get("weights")) rc.train.weights = training::weights_from_json(*w, "weights");
  if (const json* b = f.get("baseline")) rc.baseline = training::BaselineConfig::from_json(*b, "baseline");
  if (const json* e = f.get("eval")) {
    JsonFields ef(*e, "eval");
    if (const json* c = ef.get("contamination"); c && !c->is_null()) {
      if (!c->is_number()) throw ConfigError("eval.contamination: expected a number or null");
      rc.eval.contamination = c->get<double>();
    }
    ef.finish();
  }
  if (const json* s = f.get("seeds")) {
    if (!s->is_array()) throw ConfigError("seeds: expected an array of non-negative integers");
    rc.seeds.clear();
    for (const auto& v : *s) {
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError("seeds: expected an array of non-negative integers");
      }
      rc.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  f.read("output_dir", rc.output_dir);
  f.finish();
  rc.validate();
  return rc;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return from_json(j);
}

training::TrainConfig train_config_for(const RunConfig& rc, std::uint64_t seed) {
  training::TrainConfig c = rc.train;
  c.seed = seed;
  return c;
}

std::vector<double> default_beta_grid(training::Reduction reduction) {
  if (reduction == training::Reduction::kSum) return {1e-15, 5e-15, 1e-10, 5e-10, 1e-9};
  return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
}

std::vector<std::vector<json>> SweepSpec::points() const {
  std::vector<std::vector<json>> out{{}};
  for (const auto& [name, values] : axes) {
    std::vector<std::vector<json>> next;
    for (const auto& prefix : out) {
      for (const auto& v : values) {
        next.push_back(prefix);
        next.back().push_back(v);
      }
    }
    out = std::move(next);
  }
  return out;
}

std::size_t SweepSpec::size() const {
  std::size_t n = 1;
  for (const auto& axis : axes) n *= axis.second.size();
  return n;
}

RunConfig SweepSpec::at(const std::vector<json>& point) const {
  if (point.size() != axes.size()) throw PreconditionError("SweepSpec::at: point has the wrong number of values");
  json doc = base.to_json();
  for (std::size_t a = 0; a < axes.size(); ++a) {
    doc[json::json_pointer(pointer_of(axes[a].first))] = point[a];
  }
  return RunConfig::from_json(doc);
}

json SweepSpec::to_json() const {
  json j = base.to_json();
  json ax = json::object();
  for (const auto& [name, values] : axes) ax[name] = values;
  j["axes"] = ax;
  return j;
}

SweepSpec SweepSpec::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep: expected an object");
  json doc = j;
  json axes = json::object();
  if (doc.contains("axes")) {
    axes = doc["axes"];
    doc.erase("axes");
  }
  SweepSpec spec;
  spec.base = RunConfig::from_json(doc);
  if (!axes.is_object()) throw ConfigError("axes: expected an object of value lists");
  if (axes.empty()) {
    std::vector<json> grid;
    for (double b : default_beta_grid(spec.base.train.reduction)) grid.emplace_back(b);
    spec.axes.emplace_back("weights.beta", grid);
  }
  const json base_doc = spec.base.to_json();
  for (const auto& [name, values] : axes.items()) {
    if (!values.is_array() || values.empty()) throw ConfigError("axes." + name + ": expected a non-empty array");
    if (!base_doc.contains(json::json_pointer(pointer_of(name)))) throw ConfigError("axes." + name + ": unknown parameter");
    spec.axes.emplace_back(name, std::vector<json>(values.begin(), values.end()));
  }
  // Validate every point up front so a bad value fails before any training.
  for (const auto& p : spec.points()) spec.at(p);
  return spec;
}

}  // namespace defend::app
