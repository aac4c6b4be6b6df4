#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "la2/model.hpp"
#include "la2/training.hpp"

namespace la2 {

// Unknown keys are rejected with std::invalid_argument.
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// JSON run document: {"model": {...}, "train": {...}, "data": path, "out": path}.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data;
  std::string out;
  /// Channel keys given explicitly in the document; they must then match the dataset.
  bool channels_pinned = false;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace la2
