#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lcb {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

// %.17g, so every double round-trips through text.
std::string format_double(double x);

// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

struct StageRecord {
  std::string name;
  std::string outcome;  // "ok" or the error message
  std::string started;  // UTC, ISO 8601
  std::string finished;
};

// Everything a run wrote into its output directory, with content hashes.
class RunManifest {
 public:
  static RunManifest load_or_new(const std::filesystem::path& dir);

  void set_config(const nlohmann::json& config);
  // Hashes `relative` (inside dir) and lists it, replacing any older entry.
  void record_file(const std::filesystem::path& dir, const std::string& relative);
  void set_artifact(const std::string& role, const std::string& sha256) { artifacts_[role] = sha256; }
  void add_stage(StageRecord stage) { stages_.push_back(std::move(stage)); }

  const std::map<std::string, std::string>& files() const { return files_; }
  const std::map<std::string, std::string>& artifacts() const { return artifacts_; }
  const std::vector<StageRecord>& stages() const { return stages_; }
  const std::string& config_hash() const { return config_hash_; }

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& dir) const;

 private:
  std::string config_hash_;
  nlohmann::json config_;
  std::map<std::string, std::string> files_;      // relative path -> sha256
  std::map<std::string, std::string> artifacts_;  // role -> sha256
  std::vector<StageRecord> stages_;
};

// Lists files whose hash differs from the manifest or which are missing.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

// Exclusive ownership of an output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(std::filesystem::path dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

std::string utc_timestamp();

}  // namespace lcb
