#pragma once

#include "lcb/mixture_diffusion.hpp"
#include "lcb/rewards.hpp"
#include "lcb/samplers.hpp"
#include "lcb/soft_value.hpp"
#include "lcb/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lcb {

struct MixtureConfig {
  std::vector<double> weights{0.05, 0.95};
  std::vector<std::vector<double>> means{{-5.0, 0.0}, {5.0, 0.0}};
  std::vector<std::vector<double>> covariance{{1.0, 0.0}, {0.0, 1.0}};

  MixtureSpec to_spec() const;
};

struct ScheduleConfig {
  int steps = 20;
  double beta_start = 0.02;
  double beta_end = 0.30;

  NoiseSchedule to_schedule() const;
};

struct RewardConfig {
  std::string kind = "threshold";  // threshold | logistic | constant
  int coordinate = 0;
  double threshold = -7.0;
  std::string direction = "below";
  double slope = 4.0;
  double height = 1.0;
  double value = 0.0;  // constant kind only
  double temperature = 0.2;
  double raw_bound = 1.0;

  RewardSpec to_spec() const;
};

struct ValueConfig {
  std::string mode = "analytic";  // analytic | monte_carlo | regression
  std::size_t mc_inner = 1000;
  RegressionConfig regression;
};

struct LcbConfig {
  std::string scheme = "two_pass";  // two_pass | sequential
  TrainConfig train;
};

struct SamplerSection {
  std::string policy = "lcb";
  std::size_t samples = 7000;
  std::size_t rs_cap = kDefaultRsCap;
  std::size_t lcb_cap = kDefaultLcbCap;
  int bon_n = 40;
  int hybrid_m = 2;
};

struct DiagnosticsConfig {
  int bins = 100;
  double hist_lo = -10.0;
  double hist_hi = 10.0;
  int coordinate = 0;
  int coverage_sources = 50;
  int coverage_proposals = 20;
  double coverage_threshold = 0.95;
};

struct SeedConfig {
  std::uint64_t value = 1;
  std::uint64_t lcb = 2024;
  std::uint64_t sample = 7;
  std::uint64_t coverage = 13;
};

struct SweepConfig {
  std::vector<double> deltas{0.05, 0.1, 0.3};
  std::vector<double> temperatures{0.2};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> policies{"lcb"};
};

struct ExperimentConfig {
  MixtureConfig mixture;
  ScheduleConfig schedule;
  RewardConfig reward;
  ValueConfig value;
  LcbConfig lcb;
  SamplerSection sampler;
  DiagnosticsConfig diagnostics;
  SeedConfig seeds;
  SweepConfig sweep;
  std::string output_dir = "run";

  // Every field is written, so parse(to_json()) reproduces the config.
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys and type errors throw SchemaError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);

  // Checks cross-field constraints (dimensions, ranges, enum names).
  void validate() const;

  // Output directory, resolved against LCB_OUTPUT_ROOT when relative.
  std::filesystem::path resolved_output_dir() const;
};

// Applies "a.b.c=value" to a config document. The value is parsed as JSON and
// falls back to a plain string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Hash of the mixture and schedule sections; artifacts carry it to detect
// stage mismatches.
std::string model_hash(const ExperimentConfig& cfg);
std::string reward_hash(const ExperimentConfig& cfg);

}  // namespace lcb
