#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace ape::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

/// Record written next to every command's outputs. Replaying `command` with
/// `config` reproduces the output files bit for bit.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;   // absolute paths
    std::vector<std::string> outputs;  // relative to the output directory
    std::string tool_version = kToolVersion;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Lists every regular file under `dir` (relative, sorted), except the
/// manifest itself, then writes the manifest.
void write_manifest(const std::filesystem::path& dir, RunManifest manifest);
RunManifest read_manifest(const std::filesystem::path& path);

} // namespace ape::cli
