#pragma once

#include "lcb/numeric.hpp"

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lcb {

// Gaussian mixture with one covariance shared by every component.
struct MixtureSpec {
  std::vector<double> weights;
  std::vector<Vector> means;
  Matrix covariance;

  std::size_t components() const { return weights.size(); }
  Eigen::Index dim() const { return covariance.rows(); }

  // Throws std::invalid_argument when weights, means or covariance are malformed.
  void validate() const;

  double mean_coordinate(Eigen::Index j) const;
};

// Variance-preserving schedule. Step t -> t+1 of the forward process keeps
// sqrt(alpha_t) of the signal and adds N(0, beta_t I) with beta_t = 1 - alpha_t.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> alphas);

  // beta linear from beta_start to beta_end over `steps` steps.
  static NoiseSchedule linear_beta(int steps, double beta_start = 0.02, double beta_end = 0.30);

  int steps() const { return static_cast<int>(alphas_.size()); }
  double alpha(int t) const { return alphas_.at(t); }
  double beta(int t) const { return 1.0 - alphas_.at(t); }
  // Product of alpha_s for s < t; alpha_bar(0) == 1.
  double alpha_bar(int t) const { return alpha_bars_.at(t); }
  double sigma2(int t) const { return 1.0 - alpha_bars_.at(t); }
  const std::vector<double>& alphas() const { return alphas_; }

 private:
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

struct GaussianParams {
  Vector mean;
  Matrix covariance;
};

// Per-component Gaussians with shared covariance, weighted by responsibilities.
struct MixturePosterior {
  Vector weights;
  std::vector<Vector> component_means;
  Matrix shared_covariance;

  Vector mean() const;
  Matrix covariance() const;
};

struct ForwardMarginal {
  std::vector<Vector> means;
  Matrix covariance;
};

// States ordered x_T, x_{T-1}, ..., x_0.
struct Trajectory {
  std::vector<Vector> states;
  std::optional<double> terminal_reward;

  const Vector& at_level(int t) const { return states.at(states.size() - 1 - static_cast<std::size_t>(t)); }
  const Vector& endpoint() const { return states.back(); }
};

// The pretrained model: exact reverse-time kernels of the noised mixture.
// Immutable after construction apart from the proposal counter.
class MixtureDiffusion {
 public:
  MixtureDiffusion(MixtureSpec spec, NoiseSchedule schedule);

  const MixtureSpec& spec() const { return spec_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  int steps() const { return schedule_.steps(); }
  Eigen::Index dim() const { return spec_.dim(); }

  ForwardMarginal forward_marginal(int t) const;

  Vector log_responsibilities(const Vector& x, int t) const;
  Vector responsibilities(const Vector& x, int t) const;
  // Allocation-free variant for hot loops; `out` has one slot per component.
  void log_responsibilities_into(const Vector& x, int t, std::span<double> out) const;

  // Law of x_t given x_{t+1} = x_next, for 0 <= t < T.
  MixturePosterior reverse_kernel(const Vector& x_next, int t) const;
  // Law of x_0 given x_t = x, for 1 <= t <= T.
  MixturePosterior posterior_x0(const Vector& x, int t) const;

  // Affine map x_t -> E[x_0 | x_t, k] is gain * x + offset_k (shared gain).
  const Matrix& x0_gain(int t) const { return levels_.at(t).x0_gain; }
  const Matrix& x0_covariance(int t) const { return levels_.at(t).x0_cov; }
  const Matrix& level_covariance(int t) const { return levels_.at(t).cov; }
  const Matrix& level_precision(int t) const { return levels_.at(t).precision; }
  const Matrix& reverse_covariance(int t) const { return steps_.at(t).cov; }
  Vector x0_component_mean(const Vector& x, int t, std::size_t k) const;
  Vector reverse_component_mean(const Vector& x_next, int t, std::size_t k) const;

  // Every call below counts as one draw from the pretrained model.
  Vector sample_prior(Rng& rng) const;
  Vector sample_reverse_step(const Vector& x_next, int t, Rng& rng) const;
  Trajectory sample_trajectory(Rng& rng) const;

  // Not counted: oracle helpers for the forward process and x_0 posterior.
  Vector sample_data(Rng& rng) const;
  Vector sample_forward_marginal(int t, Rng& rng) const;
  Vector sample_forward_from(const Vector& x_prev, int t_prev, int t, Rng& rng) const;
  Vector sample_posterior_x0(const Vector& x, int t, Rng& rng) const;

  std::uint64_t draw_count() const { return draws_.load(std::memory_order_relaxed); }
  void reset_draw_count() const { draws_.store(0, std::memory_order_relaxed); }

 private:
  struct Level {
    Matrix cov;
    Matrix precision;
    Eigen::LLT<Matrix> chol;
    Matrix lower;
    double log_norm = 0.0;  // -0.5 log det(2 pi cov)
    std::vector<Vector> means;
    Matrix x0_gain;
    std::vector<Vector> x0_offsets;
    Matrix x0_cov;
    Matrix x0_chol;  // lower factor; zero at t = 0
  };
  struct Step {
    Matrix gain;
    std::vector<Vector> offsets;
    Matrix cov;
    Matrix chol;
  };

  std::size_t pick_component(const Vector& log_weights, Rng& rng) const;
  std::size_t pick_prior_component(Rng& rng) const;

  MixtureSpec spec_;
  NoiseSchedule schedule_;
  std::vector<double> log_weights_;
  std::vector<Level> levels_;  // t = 0..T
  std::vector<Step> steps_;    // t = 0..T-1
  mutable std::atomic<std::uint64_t> draws_{0};
};

}  // namespace lcb
