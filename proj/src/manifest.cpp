#include "mmv/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmv/error.hpp"
#include "mmv/hash.hpp"

namespace mmv {

std::string file_blob_sha1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return git_blob_sha1(ss.str());
}

void write_manifest(const std::string& dir, const ManifestInput& m) {
  namespace fs = std::filesystem;
  nlohmann::ordered_json j;
  j["tool"] = "mmv";
  j["subcommand"] = m.subcommand;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["config_hash"] = sha1_hex(m.config.dump());
  if (m.config.contains("model")) j["model_hash"] = sha1_hex(m.config["model"].dump());
  nlohmann::ordered_json outs = nlohmann::ordered_json::array();
  for (const auto& name : m.outputs) {
    const fs::path p = fs::path(dir) / name;
    outs.push_back({{"file", name},
                    {"bytes", fs::file_size(p)},
                    {"sha1", file_blob_sha1(p.string())}});
  }
  j["outputs"] = outs;
  j["summary"] = m.summary;
  j["wall_seconds"] = m.wall_seconds;
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mmv
