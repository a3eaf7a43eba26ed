#pragma once

#include <json.hpp>

#include "stpp/train.hpp"

namespace stpp {

// Strict parsing: unknown keys are config errors; every key is optional and
// falls back to the in-code default.
train::TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const train::TrainConfig& config);

gw::GwConfig gw_config_from_json(const nlohmann::json& j);
nlohmann::json gw_config_to_json(const gw::GwConfig& config);

seqdist::SubsetMode subset_mode_from_string(const std::string& s);
std::string subset_mode_to_string(seqdist::SubsetMode mode);

}  // namespace stpp
