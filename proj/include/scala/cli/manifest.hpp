#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace scala::cli {

inline constexpr int kManifestVersion = 1;

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Hashes of every regular file directly under `dir`, except the manifest.
std::map<std::string, std::string> hash_artifacts(const std::filesystem::path& dir);

// {format, version, verb, seed, config, artifacts}
nlohmann::json make_manifest(const std::string& verb, const nlohmann::json& resolved_config,
                             const std::map<std::string, std::string>& artifacts);
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest);
nlohmann::json read_manifest(const std::filesystem::path& path);

} // namespace scala::cli
