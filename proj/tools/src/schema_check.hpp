#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace cfb {

// Structural validator for the subset of JSON Schema the shipped schemas use:
// type (single or list), properties, required, additionalProperties: false,
// items, enum, minItems, maxItems. Returns human-readable violations; empty
// means the value conforms.
std::vector<std::string> schema_violations(const nlohmann::json& schema,
                                           const nlohmann::json& value,
                                           const std::string& where = "$");

nlohmann::json load_json_file(const std::string& path);

}  // namespace cfb
