#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mash::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

/// <artifact>.manifest.json next to the artifact.
std::filesystem::path manifest_path(const std::filesystem::path& artifact);

struct Manifest {
  std::string artifact;  // file name
  std::string sha256;
  std::string stage;
  std::uint64_t seed = 0;
  std::string version;
  std::string config_sha256;
  std::map<std::string, std::string> inputs;  // file name -> sha256
  nlohmann::json extra = nlohmann::json::object();

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

/// Hashes the artifact and every input, then writes the manifest.
Manifest write_manifest(const std::filesystem::path& artifact, const std::string& stage, std::uint64_t seed,
                        const std::string& config_text, const std::vector<std::filesystem::path>& inputs,
                        const nlohmann::json& extra = nlohmann::json::object());
/// Throws StageOrderError when the manifest is missing.
Manifest read_manifest(const std::filesystem::path& artifact);

/// Throws StageOrderError when an input or its manifest is missing, and
/// ArtifactMismatch when an input's bytes differ from its manifest or one of
/// its recorded upstream inputs (in the same directory) has changed since.
void verify_artifact(const std::filesystem::path& artifact);

}  // namespace mash::pipeline
