#include "ape/cli/manifest.hpp"

#include <algorithm>

#include "ape/io.hpp"

namespace ape::cli {

using nlohmann::json;

json to_json(const RunManifest& m) {
    return json{{"command", m.command}, {"config", m.config},   {"seed", m.seed},
                {"inputs", m.inputs},   {"outputs", m.outputs}, {"tool_version", m.tool_version}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.tool_version = j.at("tool_version").get<std::string>();
    return m;
}

void write_manifest(const std::filesystem::path& dir, RunManifest manifest) {
    manifest.outputs.clear();
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = std::filesystem::relative(entry.path(), dir).generic_string();
        if (rel != kManifestName) manifest.outputs.push_back(rel);
    }
    std::sort(manifest.outputs.begin(), manifest.outputs.end());
    write_file_atomic(dir / kManifestName, to_json(manifest).dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
    try {
        return manifest_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

} // namespace ape::cli
