#pragma once

#include <filesystem>

#include <json.hpp>

#include "sharpen/model.hpp"
#include "sharpen/softmax.hpp"

namespace sharpen {

using nlohmann::json;

json spaces_to_json(const Spaces& spaces);
SpacesPtr spaces_from_json(const json& j);

/// Nested record for a model. Tabular, autoregressive and linear-softmax
/// models keep their native form; anything else is stored as its table.
json model_to_json(const ConditionalModel& model, bool include_spaces = true);

/// When `spaces` is given, the record's own spaces (if any) must match it.
ModelPtr model_from_json(const json& j, SpacesPtr spaces = nullptr);

json features_to_json(const FeatureMap& phi);
FeatureMapPtr features_from_json(const json& j);

void write_json_file(const std::filesystem::path& path, const json& j);
json read_json_file(const std::filesystem::path& path);

void save_model(const ConditionalModel& model, const std::filesystem::path& path);
ModelPtr load_model(const std::filesystem::path& path);

} // namespace sharpen
