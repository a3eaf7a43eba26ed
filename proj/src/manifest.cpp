#include "stpp/manifest.hpp"

#include <chrono>
#include <fstream>

#include "stpp/errors.hpp"

namespace stpp {

std::string file_digest_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot digest missing file: " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= std::uint8_t(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  return hex;
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunManifest::RunManifest(std::string command, nlohmann::json resolved_config,
                         std::uint64_t seed) {
  body_["command"] = std::move(command);
  body_["config"] = std::move(resolved_config);
  body_["seed"] = seed;
  body_["artifact_version"] = kArtifactVersion;
  body_["inputs"] = nlohmann::json::object();
}

void RunManifest::add_input(const std::filesystem::path& path) {
  body_["inputs"][path.string()] = file_digest_hex(path);
}

void RunManifest::write_started(const std::filesystem::path& path) {
  path_ = path;
  body_["status"] = "running";
  body_["started_at"] = utc_timestamp();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << body_.dump(2) << "\n";
}

void RunManifest::write_finished(const std::filesystem::path& path, bool ok) {
  body_["status"] = ok ? "ok" : "failed";
  body_["finished_at"] = utc_timestamp();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << body_.dump(2) << "\n";
}

}  // namespace stpp
