#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mmv {

struct ManifestInput {
  std::string subcommand;
  nlohmann::ordered_json config;      // resolved config echo
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;   // file names relative to the output dir
  double wall_seconds = 0.0;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
};

// Writes <dir>/manifest.json: the config echo, its hash, and a git blob hash
// for every listed output. Only wall_seconds depends on the clock.
void write_manifest(const std::string& dir, const ManifestInput& m);

std::string file_blob_sha1(const std::string& path);

}  // namespace mmv
