#pragma once

#include "lcb/lcb.hpp"
#include "lcb/mixture_diffusion.hpp"
#include "lcb/soft_value.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace lcb {

struct TrainConfig {
  double delta = 0.1;
  double lambda_max = 12.0;
  double lambda_tol = 1e-3;
  double epsilon0 = 0.0;
  std::size_t particles = 7000;
  std::size_t heldout_particles = 7000;
  int refresh_rounds = 200;
  int steps_per_round = 1;
  std::size_t advance_cap = 1000;
  // Recompute tau on a fresh pair draw after choosing lambda.
  bool fresh_tau_pairs = false;
  BaselineOptConfig opt;
  std::uint64_t seed = 2024;

  void validate() const;
};

// One entry per baseline level, ordered T+1 down to 1.
struct TimestepReport {
  int level = 0;
  double lambda = 1.0;
  double tau = 0.0;
  double objective = 0.0;          // objective at the deployed lambda
  double objective_at_one = 0.0;   // same batch, lambda = 1
  double heldout_exceedance = 0.0;
  std::size_t heldout_pairs = 0;
  std::uint64_t advance_proposals = 0;
  std::uint64_t forced_acceptances = 0;
  double particle_value_mean = 0.0;  // mean v_{level-1} after advancing
  double particle_value_se = 0.0;
  double baseline_range = 0.0;       // max - min of b over particles
};

struct TrainReport {
  std::vector<TimestepReport> levels;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::string scheme;

  nlohmann::json to_json() const;
};

struct TrainResult {
  LcbSystem system;
  TrainReport report;
};

// Staged scheme: pass 1 fits b at lambda = 1 over refresh rounds; pass 2
// freezes b and chooses lambda and tau on fresh particles.
TrainResult train_two_pass(const MixtureDiffusion& model, const ValueModel& value, const TrainConfig& cfg);

// Single pass alternating gradient steps on b with lambda searches.
TrainResult train_sequential(const MixtureDiffusion& model, const ValueModel& value, const TrainConfig& cfg);

}  // namespace lcb
