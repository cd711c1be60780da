#include "lcb/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace lcb {

std::uint64_t SampleResult::total_proposals() const {
  std::uint64_t n = 0;
  for (auto c : proposals_per_step) n += c;
  return n;
}

StepOutcome rejection_step(const MixtureDiffusion& model, const ValueModel& value, const Vector& x_next, int t,
                           double threshold, std::size_t cap, Rng& rng) {
  if (cap < 1) throw std::invalid_argument("rejection_step: cap must be positive");
  const bool prior = t == model.steps();
  StepOutcome out;
  double best_value = -std::numeric_limits<double>::infinity();
  Vector best;
  for (std::size_t n = 1;; ++n) {
    Vector x = prior ? model.sample_prior(rng) : model.sample_reverse_step(x_next, t, rng);
    const double v = value.evaluate(x, t);
    const double log_u = std::log(rng.uniform_open0());
    if (log_u <= v - threshold) {
      out.x = std::move(x);
      out.proposals = n;
      return out;
    }
    if (v > best_value) {
      best_value = v;
      best = x;
    }
    if (n >= cap) {
      out.x = std::move(best);
      out.proposals = n;
      out.forced = true;
      return out;
    }
  }
}

namespace {

using Threshold = std::function<double(int level, const Vector& x_level)>;

SampleResult guided_sample(const MixtureDiffusion& model, const ValueModel& value, const Threshold& threshold,
                           std::size_t cap, Rng& rng, bool keep_trajectory) {
  const int T = model.steps();
  SampleResult res;
  res.proposals_per_step.assign(static_cast<std::size_t>(T) + 1, 0);
  Trajectory traj;

  const Vector none;
  StepOutcome step = rejection_step(model, value, none, T, threshold(T + 1, none), cap, rng);
  res.proposals_per_step[T] = step.proposals;
  res.forced_acceptances += step.forced ? 1 : 0;
  Vector x = std::move(step.x);
  if (keep_trajectory) traj.states.push_back(x);

  for (int t = T - 1; t >= 0; --t) {
    step = rejection_step(model, value, x, t, threshold(t + 1, x), cap, rng);
    res.proposals_per_step[t] = step.proposals;
    res.forced_acceptances += step.forced ? 1 : 0;
    x = std::move(step.x);
    if (keep_trajectory) traj.states.push_back(x);
  }
  res.x0 = x;
  res.reward = value.reward().raw(x);
  if (keep_trajectory) {
    traj.terminal_reward = res.reward;
    res.trajectory = std::move(traj);
  }
  return res;
}

}  // namespace

SampleResult sample_unguided(const MixtureDiffusion& model, const RewardSpec& reward, Rng& rng, bool keep_trajectory) {
  Trajectory traj = model.sample_trajectory(rng);
  SampleResult res;
  res.x0 = traj.endpoint();
  res.reward = reward.raw(res.x0);
  res.proposals_per_step.assign(static_cast<std::size_t>(model.steps()) + 1, 1);
  if (keep_trajectory) {
    traj.terminal_reward = res.reward;
    res.trajectory = std::move(traj);
  }
  return res;
}

SampleResult sample_exact_rs(const MixtureDiffusion& model, const ValueModel& value, double bound, Rng& rng,
                             std::size_t cap, bool keep_trajectory) {
  return guided_sample(model, value, [bound](int, const Vector&) { return bound; }, cap, rng, keep_trajectory);
}

SampleResult sample_lcb_rs(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs, Rng& rng,
                           std::size_t cap, bool keep_trajectory) {
  if (lcbs.steps() != model.steps()) throw std::invalid_argument("sample_lcb_rs: baseline count does not match schedule");
  return guided_sample(
      model, value, [&lcbs](int level, const Vector& x) { return lcbs.at(level).evaluate(x); }, cap, rng,
      keep_trajectory);
}

SampleResult sample_bon(const MixtureDiffusion& model, const RewardSpec& reward, int n, Rng& rng, bool keep_trajectory) {
  if (n < 1) throw std::invalid_argument("sample_bon: N must be positive");
  SampleResult best;
  for (int i = 0; i < n; ++i) {
    SampleResult cand = sample_unguided(model, reward, rng, keep_trajectory);
    if (i == 0 || cand.reward > best.reward) best = std::move(cand);
  }
  std::fill(best.proposals_per_step.begin(), best.proposals_per_step.end(), static_cast<std::uint64_t>(n));
  return best;
}

SampleResult sample_lcb_then_bon(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs, int m,
                                 Rng& rng, std::size_t cap, bool keep_trajectory) {
  if (m < 1) throw std::invalid_argument("sample_lcb_then_bon: M must be positive");
  SampleResult best;
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(model.steps()) + 1, 0);
  std::uint64_t forced = 0;
  for (int i = 0; i < m; ++i) {
    SampleResult cand = sample_lcb_rs(model, value, lcbs, rng, cap, keep_trajectory);
    for (std::size_t s = 0; s < counts.size(); ++s) counts[s] += cand.proposals_per_step[s];
    forced += cand.forced_acceptances;
    if (i == 0 || cand.reward > best.reward) best = std::move(cand);
  }
  best.proposals_per_step = std::move(counts);
  best.forced_acceptances = forced;
  return best;
}

ProposalBound expected_proposals_bound(const MixtureDiffusion& model, const ValueModel& value, double threshold,
                                       const Vector& x_next, int t, std::size_t n_mc, Rng& rng) {
  if (n_mc < 1000) throw std::invalid_argument("expected_proposals_bound: n_mc must be at least 1000");
  ProposalBound out;
  std::vector<double> gaps(n_mc);
  std::size_t exceed = 0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const double v = value.evaluate(model.sample_reverse_step(x_next, t, rng), t);
    gaps[i] = threshold - v;
    if (v > threshold) ++exceed;
  }
  out.coverage_violation = static_cast<double>(exceed) / static_cast<double>(n_mc);
  if (exceed == n_mc) {
    out.degenerate = true;
    out.bound = std::numeric_limits<double>::infinity();
  } else {
    const double c = out.coverage_violation;
    out.bound = std::exp(log_mean_exp(gaps)) / ((1.0 - c) * (1.0 - c));
  }

  double sum = 0.0, sum2 = 0.0;
  constexpr std::size_t kLoopCap = 1000000;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const StepOutcome a = rejection_step(model, value, x_next, t, threshold, kLoopCap, rng);
    const double n = static_cast<double>(a.proposals);
    sum += n;
    sum2 += n * n;
  }
  const double mean = sum / static_cast<double>(n_mc);
  const double var = std::max(0.0, sum2 / static_cast<double>(n_mc) - mean * mean);
  out.empirical_mean = mean;
  out.empirical_se = std::sqrt(var / static_cast<double>(n_mc));
  return out;
}

std::string to_string(Policy p) {
  switch (p) {
    case Policy::Unguided: return "unguided";
    case Policy::ExactRs: return "rs";
    case Policy::LcbRs: return "lcb";
    case Policy::BestOfN: return "bon";
    case Policy::LcbThenBon: return "lcb_bon";
  }
  return "unknown";
}

Policy policy_from_string(const std::string& s) {
  if (s == "unguided") return Policy::Unguided;
  if (s == "rs") return Policy::ExactRs;
  if (s == "lcb") return Policy::LcbRs;
  if (s == "bon") return Policy::BestOfN;
  if (s == "lcb_bon") return Policy::LcbThenBon;
  throw std::invalid_argument("unknown sampling policy '" + s + "'");
}

std::vector<SampleResult> sample_batch(const MixtureDiffusion& model, const RewardSpec& reward, const ValueModel* value,
                                       const LcbSystem* lcbs, const SamplerConfig& cfg, std::size_t n,
                                       std::uint64_t seed) {
  const bool needs_value = cfg.policy == Policy::ExactRs || cfg.policy == Policy::LcbRs || cfg.policy == Policy::LcbThenBon;
  const bool needs_lcb = cfg.policy == Policy::LcbRs || cfg.policy == Policy::LcbThenBon;
  if (needs_value && value == nullptr) throw std::invalid_argument("sample_batch: policy requires a value model");
  if (needs_lcb && lcbs == nullptr) throw std::invalid_argument("sample_batch: policy requires trained baselines");

  std::vector<SampleResult> out(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    switch (cfg.policy) {
      case Policy::Unguided:
        out[i] = sample_unguided(model, reward, rng, cfg.keep_trajectory);
        break;
      case Policy::ExactRs:
        out[i] = sample_exact_rs(model, *value, value->bound(), rng, cfg.rs_cap, cfg.keep_trajectory);
        break;
      case Policy::LcbRs:
        out[i] = sample_lcb_rs(model, *value, *lcbs, rng, cfg.lcb_cap, cfg.keep_trajectory);
        break;
      case Policy::BestOfN:
        out[i] = sample_bon(model, reward, cfg.bon_n, rng, cfg.keep_trajectory);
        break;
      case Policy::LcbThenBon:
        out[i] = sample_lcb_then_bon(model, *value, *lcbs, cfg.hybrid_m, rng, cfg.lcb_cap, cfg.keep_trajectory);
        break;
    }
  });
  return out;
}

}  // namespace lcb
