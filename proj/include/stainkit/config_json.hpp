#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "stainkit/augmentation.hpp"
#include "stainkit/stain_estimation.hpp"
#include "stainkit/trainer.hpp"

// JSON <-> config structs. Parsing is strict: unknown keys are rejected so
// a typo in a config file fails loudly instead of silently using defaults.

namespace stainkit {

// Throws ParseError naming the first key of j not in `allowed`.
void require_keys(const nlohmann::json& j,
                  const std::set<std::string>& allowed,
                  const std::string& context);

// Each parser starts from `base` and overrides only the keys present, so
// config layers (defaults, file, flags) compose naturally.
PerturbParams perturb_params_from_json(const nlohmann::json& j,
                                       PerturbParams base = {});
SnmfConfig snmf_config_from_json(const nlohmann::json& j,
                                 SnmfConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   TrainConfig base = {});

nlohmann::ordered_json to_json(const PerturbParams& p);
nlohmann::ordered_json to_json(const SnmfConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);

std::string consistency_reduce_to_string(ConsistencyReduce r);
ConsistencyReduce consistency_reduce_from_string(const std::string& s);

}  // namespace stainkit
