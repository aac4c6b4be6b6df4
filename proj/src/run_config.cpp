#include <fstream>

#include "la2/json_config.hpp"

namespace la2 {

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"model", c.model}, {"train", c.train}, {"data", c.data}, {"out", c.out}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("run config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      value.get_to(c.model);
      c.channels_pinned = value.contains("in_channels") || value.contains("coord_channels") ||
                          value.contains("out_channels");
    } else if (key == "train") {
      value.get_to(c.train);
    } else if (key == "data") {
      value.get_to(c.data);
    } else if (key == "out") {
      value.get_to(c.out);
    } else {
      throw std::invalid_argument("run config: unknown key '" + key + "'");
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  try {
    return j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
}

}  // namespace la2
