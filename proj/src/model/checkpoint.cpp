#include "defend/model/checkpoint.hpp"

#include <map>

#include "defend/errors.hpp"
#include "defend/io.hpp"

namespace defend::model {

using nlohmann::json;

std::uint64_t config_hash(const json& config) { return fnv1a64(config.dump()); }

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> params,
                     std::uint64_t hash, const json& meta) {
  json tensors = json::object();
  for (const auto& p : params) {
    tensors[p.name] = {{"shape", {p.tensor->rows(), p.tensor->cols()}}, {"data", p.tensor->storage()}};
  }
  json doc = {{"version", kCheckpointVersion},
              {"config_hash", std::to_string(hash)},
              {"meta", meta},
              {"tensors", std::move(tensors)}};
  write_file_atomic(path, doc.dump() + "\n");
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> params) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const std::string where = path.string() + ": ";
  if (!doc.is_object() || doc.value("version", -1) != kCheckpointVersion) {
    throw DataError(where + "unsupported checkpoint version");
  }
  const json& tensors = doc.at("tensors");
  if (tensors.size() != params.size()) {
    throw DataError(where + "expected " + std::to_string(params.size()) + " tensors, found " +
                    std::to_string(tensors.size()));
  }
  std::vector<std::vector<double>> staged;
  for (const auto& p : params) {
    if (!tensors.contains(p.name)) throw DataError(where + "missing tensor " + p.name);
    const json& t = tensors.at(p.name);
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.tensor->rows() || shape[1] != p.tensor->cols()) {
      throw DataError(where + "tensor " + p.name + " has shape " + t.at("shape").dump() + ", expected " +
                      p.tensor->shape().str());
    }
    auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != p.tensor->size()) throw DataError(where + "tensor " + p.name + " has wrong length");
    staged.push_back(std::move(data));
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k].tensor->storage() = std::move(staged[k]);
  CheckpointInfo info;
  try {
    info.config_hash = std::stoull(doc.at("config_hash").get<std::string>());
  } catch (const std::exception&) {
    throw DataError(where + "bad config_hash");
  }
  info.meta = doc.value("meta", json::object());
  return info;
}

}  // namespace defend::model
