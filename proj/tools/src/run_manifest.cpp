#include "run_manifest.hpp"

#include <fstream>

#include "cfb/errors.hpp"

#ifndef CF_BOUNDS_VERSION
#define CF_BOUNDS_VERSION "0.0.0"
#endif

namespace cfb {

std::string manifest_path_for(const std::string& out_path) {
    return out_path + ".manifest.json";
}

nlohmann::json manifest_json(const RunManifest& m) {
    nlohmann::json j{{"command", m.command},
                     {"version", CF_BOUNDS_VERSION},
                     {"config", m.config},
                     {"outputs", m.outputs}};
    if (m.has_seed) {
        j["seed"] = m.seed;
    } else {
        j["seed"] = nullptr;
    }
    return j;
}

void write_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << manifest_json(m).dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace cfb
