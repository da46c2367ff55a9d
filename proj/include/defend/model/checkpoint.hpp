#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include <json.hpp>

#include "defend/model/model.hpp"

namespace defend::model {

inline constexpr int kCheckpointVersion = 1;

// FNV-1a of the compact JSON dump.
std::uint64_t config_hash(const nlohmann::json& config);

// JSON record {"version", "config_hash", "meta", "tensors": {name: {"shape", "data"}}}.
void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> params,
                     std::uint64_t hash, const nlohmann::json& meta = nlohmann::json::object());

struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  nlohmann::json meta;
};

// Fills every named tensor from the file. Throws DataError on a version
// mismatch, a missing or extra tensor, or a shape mismatch; nothing is
// modified unless the whole file is consistent.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> params);

}  // namespace defend::model
