#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ngauge {

std::string_view tool_version() noexcept;

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Audit record written next to every output as `<output>.manifest.json`.
/// Only `started_at` and `wall_seconds` vary between identical runs.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::string config_digest;  // SHA-256 of the compact config JSON
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, SHA-256
  std::string tool_version;
  std::string started_at;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

class ManifestRecorder {
 public:
  ManifestRecorder(std::string command, nlohmann::json config, std::uint64_t seed,
                   const std::vector<std::filesystem::path>& inputs);

  /// Stamps the elapsed time and writes `<output>.manifest.json`.
  std::filesystem::path write_for(const std::filesystem::path& output);

  const RunManifest& manifest() const noexcept { return manifest_; }

 private:
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace ngauge
