#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "scala/model/model.hpp"

namespace scala::model {

inline constexpr int kCheckpointVersion = 1;

// Checkpoint document: header plus every
// parameter tensor as {name, shape, data}. Doubles are written in their
// shortest round-trip form, so save/load is exact.
nlohmann::json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Model& model);
Model from_json(const nlohmann::json& j);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

} // namespace scala::model
