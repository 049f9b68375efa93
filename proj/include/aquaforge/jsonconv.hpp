#pragma once

#include <nlohmann/json.hpp>

#include "aquaforge/metatrain.hpp"
#include "aquaforge/model.hpp"
#include "aquaforge/synthgen.hpp"

namespace aquaforge {

// nlohmann ADL serializers. Keys match the field names exactly; manifests
// and config files share them.
void to_json(nlohmann::ordered_json& j, const SynthParams& p);
void from_json(const nlohmann::ordered_json& j, SynthParams& p);

void to_json(nlohmann::ordered_json& j, const ArchConfig& c);
void to_json(nlohmann::ordered_json& j, const MetaConfig& c);

}  // namespace aquaforge
