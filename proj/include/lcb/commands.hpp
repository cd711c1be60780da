#pragma once

#include "lcb/config.hpp"
#include "lcb/samplers.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace lcb {

enum ExitCode : int {
  kExitOk = 0,
  kExitGeneric = 1,
  kExitSchema = 2,
  kExitArtifactMismatch = 3,
  kExitFitDivergence = 4,
  kExitParticleCollapse = 5,
};

// Runs fn and maps the error types onto exit codes, printing the message to err.
int run_guarded(const std::function<void()>& fn, std::ostream& err);

inline constexpr const char* kValueArtifact = "value.json";
inline constexpr const char* kLcbArtifact = "lcb.json";

// Each stage locks the output directory, writes its files and appends itself
// to the manifest.
void cmd_train_value(const ExperimentConfig& cfg, std::ostream& log);
void cmd_train_lcb(const ExperimentConfig& cfg, std::ostream& log);
// Writes samples_<policy>.csv and returns its path.
std::filesystem::path cmd_sample(const ExperimentConfig& cfg, std::ostream& log);
void cmd_eval(const ExperimentConfig& cfg, const std::vector<std::filesystem::path>& sample_sets, std::ostream& log);
void cmd_coverage(const ExperimentConfig& cfg, std::ostream& log);
void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);
// Throws ArtifactMismatch when any listed file is missing or altered.
void cmd_verify_manifest(const std::filesystem::path& dir, std::ostream& log);

// Sample CSV columns: index, x0..x{d-1}, reward, proposals, forced_acceptances.
std::string samples_csv(const std::vector<SampleResult>& results);

struct SampleSet {
  std::vector<Vector> points;
  std::vector<double> rewards;
  std::vector<std::uint64_t> proposals;
  std::vector<std::uint64_t> forced;

  std::size_t size() const { return points.size(); }
};
SampleSet read_samples_csv(const std::filesystem::path& path);

}  // namespace lcb
