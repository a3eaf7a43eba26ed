#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace stpp {

inline constexpr const char* kArtifactVersion = "0.1.0";

// FNV-1a 64-bit digest of the file bytes, as a hex string.
std::string file_digest_hex(const std::filesystem::path& path);

// Records how a command was run: written with status "running" before the
// work starts and finalized afterwards, so every output directory can be
// reproduced from its manifest.
class RunManifest {
 public:
  RunManifest(std::string command, nlohmann::json resolved_config, std::uint64_t seed);

  void add_input(const std::filesystem::path& path);
  void write_started(const std::filesystem::path& path);
  void write_finished(const std::filesystem::path& path, bool ok);

 private:
  nlohmann::json body_;
  std::filesystem::path path_;
};

}  // namespace stpp
