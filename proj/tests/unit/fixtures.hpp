#pragma once

#include "lcb/mixture_diffusion.hpp"
#include "lcb/rewards.hpp"

#include <cmath>
#include <initializer_list>

namespace lcb::testing {

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// 0.05 N([-5,0], I) + 0.95 N([5,0], I)
inline MixtureSpec two_cluster_spec() {
  return MixtureSpec{{0.05, 0.95}, {vec({-5.0, 0.0}), vec({5.0, 0.0})}, Matrix::Identity(2, 2)};
}

inline MixtureDiffusion two_cluster_model(int steps = 20) {
  return MixtureDiffusion(two_cluster_spec(), NoiseSchedule::linear_beta(steps));
}

inline RewardSpec left_tail_reward(double temperature = 0.2) {
  return RewardSpec::threshold(0, -7.0, Direction::Below, temperature);
}

inline double sample_mean_se(const std::vector<double>& xs, double* mean) {
  double s = 0.0, s2 = 0.0;
  for (double x : xs) {
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(xs.size());
  *mean = s / n;
  return std::sqrt(std::max(0.0, s2 / n - *mean * *mean) / (n - 1.0));
}

}  // namespace lcb::testing
