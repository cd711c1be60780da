#pragma once

#include "lcb/mixture_diffusion.hpp"
#include "lcb/mlp.hpp"
#include "lcb/rewards.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lcb {

// v_t(x) = log E[exp(r(x_0)) | x_t = x] in closed form. Supports threshold,
// logistic (Gauss-Hermite, 64 nodes) and constant rewards. t = 0 returns r(x).
double analytic_value(const MixtureDiffusion& model, const RewardSpec& reward, const Vector& x, int t);
// v_{T+1} = log E[exp(r(x_0))] under the data mixture.
double analytic_terminal_value(const MixtureDiffusion& model, const RewardSpec& reward);

// logsumexp of r over n_inner posterior draws of x_0, minus log n_inner, clipped to [-B, B].
double mc_value(const MixtureDiffusion& model, const RewardSpec& reward, const Vector& x, int t, std::size_t n_inner,
                Rng& rng);

enum class ValueMode { Analytic, MonteCarlo, Regression };
std::string to_string(ValueMode mode);
ValueMode value_mode_from_string(const std::string& s);

struct RegressionConfig {
  std::size_t n_trajectories = 70000;
  int epochs = 20;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::vector<int> hidden{64, 64};
  std::uint64_t seed = 1;

  void validate() const;
};

// Per-timestep soft-value estimate, clipped to [-B, B]. Holds a non-owning
// pointer to the diffusion model, which must outlive it.
class ValueModel {
 public:
  static ValueModel analytic(const MixtureDiffusion& model, const RewardSpec& reward);
  static ValueModel monte_carlo(const MixtureDiffusion& model, const RewardSpec& reward, std::size_t n_inner,
                                std::uint64_t seed);
  // networks[t] for t = 0..T.
  static ValueModel regression(const MixtureDiffusion& model, const RewardSpec& reward, std::vector<Mlp> networks,
                               double terminal_value, RegressionConfig cfg);

  ValueMode mode() const { return mode_; }
  double bound() const { return reward_.effective_bound(); }
  int steps() const { return model_->steps(); }
  const RewardSpec& reward() const { return reward_; }
  const MixtureDiffusion& diffusion() const { return *model_; }

  double evaluate(const Vector& x, int t) const;
  Vector evaluate_batch(const Matrix& X, int t) const;
  double terminal_value() const { return terminal_; }

  nlohmann::json to_json() const;
  static ValueModel from_json(const nlohmann::json& j, const MixtureDiffusion& model, const RewardSpec& reward);

 private:
  ValueModel(const MixtureDiffusion& model, RewardSpec reward, ValueMode mode);
  double clip(double v) const;

  const MixtureDiffusion* model_;
  RewardSpec reward_;
  ValueMode mode_;
  double terminal_ = 0.0;
  std::size_t n_inner_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Mlp> networks_;
  RegressionConfig regression_cfg_;
};

// Poisson deviance mean_i (h_i - y_i log h_i) with h = exp(B tanh(f(x))), and its
// parameter gradient. Minimised by h = E[y | x] like the squared loss, but the
// gradient does not vanish where h is small.
std::pair<double, Vector> regression_loss_and_gradient(const Mlp& net, const Matrix& X, const Vector& targets, double bound);
double regression_output(const Mlp& net, const Vector& x, double bound);

// Fits one network per t = 0..T on targets exp(r(x_0)) from n shared
// pretrained trajectories. Throws FitDivergence on a non-finite loss.
ValueModel fit_regression_values(const MixtureDiffusion& model, const RewardSpec& reward, const RegressionConfig& cfg);

}  // namespace lcb
