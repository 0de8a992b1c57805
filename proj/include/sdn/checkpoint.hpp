#pragma once

#include <string>

#include <json.hpp>

#include "sdn/models.hpp"

namespace sdn {

using Json = nlohmann::json;

// Checkpoints are single JSON documents. Every kind carries format_version,
// kind, trunk_cfg, layers, rng_seed and training_meta; the head fields vary
// by kind. Serialization is value-exact for doubles, so load(save(m))
// reproduces the model bit for bit.

Json sdn_to_json(const SdnModel& m, Json training_meta = Json::object());
SdnModel sdn_from_json(const Json& doc);

Json mdn_to_json(const MdnModel& m, Json training_meta = Json::object());
MdnModel mdn_from_json(const Json& doc);

Json regressor_to_json(const RegressorModel& m,
                       Json training_meta = Json::object());
RegressorModel regressor_from_json(const Json& doc);

void save_checkpoint(const std::string& path, const Json& doc);
Json load_checkpoint(const std::string& path);

// "sdn", "mdn" or "regressor".
std::string checkpoint_kind(const Json& doc);

}  // namespace sdn
