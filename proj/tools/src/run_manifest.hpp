#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace cfb {

// Provenance record written before any heavy computation so that a crashed or
// interrupted run still leaves behind what was attempted. Every file a command
// produces references the manifest path, and the manifest lists every planned
// output. Deliberately clock-free: identical invocations produce identical
// manifests.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    bool has_seed = false;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::string> outputs;
};

// canonical sidecar location: "<output>.manifest.json"
std::string manifest_path_for(const std::string& out_path);

nlohmann::json manifest_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const std::string& path);

}  // namespace cfb
