#include "schema_check.hpp"

#include <fstream>

#include "cfb/errors.hpp"

namespace cfb {

namespace {

using nlohmann::json;

bool matches_type(const json& value, const std::string& type) {
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "string") return value.is_string();
    if (type == "integer") return value.is_number_integer();
    if (type == "number") return value.is_number();
    if (type == "boolean") return value.is_boolean();
    if (type == "null") return value.is_null();
    return false;
}

std::string type_name(const json& value) {
    switch (value.type()) {
        case json::value_t::object: return "object";
        case json::value_t::array: return "array";
        case json::value_t::string: return "string";
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::null: return "null";
        default: return "unknown";
    }
}

void check(const json& schema, const json& value, const std::string& where,
           std::vector<std::string>& out) {
    if (schema.contains("type")) {
        const json& t = schema.at("type");
        bool ok = false;
        if (t.is_string()) {
            ok = matches_type(value, t.get<std::string>());
        } else {
            for (const auto& alt : t) ok = ok || matches_type(value, alt.get<std::string>());
        }
        if (!ok) {
            out.push_back(where + ": expected type " + t.dump() + ", got " +
                          type_name(value));
            return;  // further structural checks would only cascade
        }
    }
    if (schema.contains("enum")) {
        bool ok = false;
        for (const auto& alt : schema.at("enum")) ok = ok || alt == value;
        if (!ok) out.push_back(where + ": value " + value.dump() + " not in enum");
    }
    if (value.is_object()) {
        if (schema.contains("required")) {
            for (const auto& key : schema.at("required")) {
                if (!value.contains(key.get<std::string>())) {
                    out.push_back(where + ": missing required key \"" +
                                  key.get<std::string>() + "\"");
                }
            }
        }
        const json* props = schema.contains("properties") ? &schema.at("properties") : nullptr;
        for (const auto& [key, sub] : value.items()) {
            if (props && props->contains(key)) {
                check(props->at(key), sub, where + "." + key, out);
            } else if (schema.value("additionalProperties", json(true)) == json(false)) {
                out.push_back(where + ": unexpected key \"" + key + "\"");
            }
        }
    }
    if (value.is_array()) {
        if (schema.contains("minItems") &&
            value.size() < schema.at("minItems").get<std::size_t>()) {
            out.push_back(where + ": fewer than " + schema.at("minItems").dump() +
                          " items");
        }
        if (schema.contains("maxItems") &&
            value.size() > schema.at("maxItems").get<std::size_t>()) {
            out.push_back(where + ": more than " + schema.at("maxItems").dump() +
                          " items");
        }
        if (schema.contains("items")) {
            for (std::size_t i = 0; i < value.size(); ++i) {
                check(schema.at("items"), value[i], where + "[" + std::to_string(i) + "]",
                      out);
            }
        }
    }
}

}  // namespace

std::vector<std::string> schema_violations(const json& schema, const json& value,
                                           const std::string& where) {
    std::vector<std::string> out;
    check(schema, value, where, out);
    return out;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": invalid json: " + e.what());
    }
    return j;
}

}  // namespace cfb
