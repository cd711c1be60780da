#pragma once

#include "lcb/lcb.hpp"
#include "lcb/mixture_diffusion.hpp"
#include "lcb/rewards.hpp"
#include "lcb/soft_value.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lcb {

inline constexpr std::size_t kDefaultRsCap = 10000;
inline constexpr std::size_t kDefaultLcbCap = 1000;

struct SampleResult {
  Vector x0;
  std::optional<Trajectory> trajectory;
  // Index = level of the produced state; index T is the prior draw.
  std::vector<std::uint64_t> proposals_per_step;
  std::uint64_t forced_acceptances = 0;
  double reward = 0.0;  // raw reward of x0

  std::uint64_t total_proposals() const;
};

struct StepOutcome {
  Vector x;
  std::uint64_t proposals = 0;
  bool forced = false;
};

// Draws x_t ~ p_t(. | x_next), or the prior when t == T (x_next unused), until
// log u <= v_t(x_t) - threshold. After `cap` proposals the best-valued one is taken.
StepOutcome rejection_step(const MixtureDiffusion& model, const ValueModel& value, const Vector& x_next, int t,
                           double threshold, std::size_t cap, Rng& rng);

SampleResult sample_unguided(const MixtureDiffusion& model, const RewardSpec& reward, Rng& rng,
                             bool keep_trajectory = false);

// Accepts x_t with probability exp(v_t(x_t) - bound); the prior step uses v_T.
SampleResult sample_exact_rs(const MixtureDiffusion& model, const ValueModel& value, double bound, Rng& rng,
                             std::size_t cap = kDefaultRsCap, bool keep_trajectory = false);

// Accepts x_t with probability min(1, exp(v_t(x_t) - B_{t+1}(x_{t+1}))).
SampleResult sample_lcb_rs(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs, Rng& rng,
                           std::size_t cap = kDefaultLcbCap, bool keep_trajectory = false);

// Highest raw reward among n unguided trajectories (first index on ties).
SampleResult sample_bon(const MixtureDiffusion& model, const RewardSpec& reward, int n, Rng& rng,
                        bool keep_trajectory = false);

// Highest raw reward among m baselined draws; proposal counts are summed.
SampleResult sample_lcb_then_bon(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs, int m,
                                 Rng& rng, std::size_t cap = kDefaultLcbCap, bool keep_trajectory = false);

struct ProposalBound {
  double empirical_mean = 0.0;  // mean proposals of the accept/reject loop
  double empirical_se = 0.0;
  double bound = 0.0;           // (1/(1-c)^2) E[exp(B - v)]
  double coverage_violation = 0.0;  // c: fraction of proposals with v > B
  bool degenerate = false;      // c == 1
};

// Monte Carlo evaluation of both sides of the per-step proposal bound at one
// source state x_next (level t+1). Uses `threshold` as B_{t+1}(x_next).
ProposalBound expected_proposals_bound(const MixtureDiffusion& model, const ValueModel& value, double threshold,
                                       const Vector& x_next, int t, std::size_t n_mc, Rng& rng);

enum class Policy { Unguided, ExactRs, LcbRs, BestOfN, LcbThenBon };
std::string to_string(Policy p);
Policy policy_from_string(const std::string& s);

struct SamplerConfig {
  Policy policy = Policy::Unguided;
  std::size_t rs_cap = kDefaultRsCap;
  std::size_t lcb_cap = kDefaultLcbCap;
  int bon_n = 40;
  int hybrid_m = 2;
  bool keep_trajectory = false;
};

// Sample i uses its own stream derive_seed(seed, i), so results do not depend
// on thread count or scheduling.
std::vector<SampleResult> sample_batch(const MixtureDiffusion& model, const RewardSpec& reward, const ValueModel* value,
                                       const LcbSystem* lcbs, const SamplerConfig& cfg, std::size_t n,
                                       std::uint64_t seed);

}  // namespace lcb
