#include "lcb/manifest.hpp"

#include "lcb/errors.hpp"
#include "lcb/hashing.hpp"

#include <Eigen/Core>

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

namespace lcb {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest RunManifest::load_or_new(const fs::path& dir) {
  const fs::path p = dir / kManifestName;
  if (!fs::exists(p)) return {};
  std::ifstream in(p);
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

void RunManifest::set_config(const json& config) {
  config_ = config;
  config_hash_ = sha256_hex(config.dump());
}

void RunManifest::record_file(const fs::path& dir, const std::string& relative) {
  files_[relative] = sha256_file(dir / relative);
}

json RunManifest::to_json() const {
  json stages = json::array();
  for (const auto& s : stages_)
    stages.push_back({{"name", s.name}, {"outcome", s.outcome}, {"started", s.started}, {"finished", s.finished}});
  json files = json::array();
  for (const auto& [path, sha] : files_) files.push_back({{"path", path}, {"sha256", sha}});
  const std::string eigen = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION);
  json seeds = config_.is_object() && config_.contains("seeds") ? config_["seeds"] : json::object();
  return {{"config_hash", config_hash_},
          {"config", config_},
          {"seeds", seeds},
          {"versions", {{"lcb", kVersion}, {"eigen", eigen}}},
          {"artifacts", artifacts_},
          {"stages", stages},
          {"files", files}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.config_hash_ = j.at("config_hash").get<std::string>();
  m.config_ = j.at("config");
  m.artifacts_ = j.at("artifacts").get<std::map<std::string, std::string>>();
  for (const auto& s : j.at("stages"))
    m.stages_.push_back({s.at("name").get<std::string>(), s.at("outcome").get<std::string>(),
                         s.at("started").get<std::string>(), s.at("finished").get<std::string>()});
  for (const auto& f : j.at("files")) m.files_[f.at("path").get<std::string>()] = f.at("sha256").get<std::string>();
  return m;
}

void RunManifest::save(const fs::path& dir) const { write_file_atomic(dir / kManifestName, to_json().dump(2) + "\n"); }

std::vector<std::string> verify_manifest(const fs::path& dir) {
  if (!fs::exists(dir / kManifestName)) throw ArtifactMismatch("no manifest in " + dir.string());
  const RunManifest m = RunManifest::load_or_new(dir);
  std::vector<std::string> problems;
  for (const auto& [path, sha] : m.files()) {
    if (!fs::exists(dir / path)) {
      problems.push_back(path + ": missing");
      continue;
    }
    const std::string actual = sha256_file(dir / path);
    if (actual != sha) problems.push_back(path + ": hash " + actual + " != " + sha);
  }
  return problems;
}

OutputLock::OutputLock(fs::path dir) : path_(std::move(dir) / ".lock") {
  fs::create_directories(path_.parent_path());
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw std::runtime_error("output directory is locked by another process: " + path_.string());
  const std::string pid = std::to_string(::getpid()) + "\n";
  (void)!::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace lcb
