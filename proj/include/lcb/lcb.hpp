#pragma once

#include "lcb/mlp.hpp"
#include "lcb/soft_value.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <vector>

namespace lcb {

// Pairs (x_{t+1}, x_t) with x_t ~ p_t(. | x_{t+1}); one pair per column.
struct PairBatch {
  Matrix next;
  Matrix current;
  int t = 0;  // level of `current`

  std::size_t size() const { return static_cast<std::size_t>(next.cols()); }
  void validate() const;
};

// b_{t+1}: either a constant (the scalar prior-step case) or a network.
class BaselineModel {
 public:
  BaselineModel() = default;
  static BaselineModel constant(double c);
  static BaselineModel network(Mlp net);

  bool is_constant() const { return !net_.has_value(); }
  const Mlp& net() const { return *net_; }

  double evaluate(const Vector& x) const;
  Vector evaluate_batch(const Matrix& X) const;

  Vector parameters() const;
  void set_parameters(const Vector& p);
  // Gradient of sum_i dout_i * b(x_i) over the parameters.
  Vector gradient(const Matrix& X, const Vector& dout) const;
  // b(x) -> b(x) + c for every x.
  void shift(double c);

  nlohmann::json to_json() const;
  static BaselineModel from_json(const nlohmann::json& j);

 private:
  double constant_ = 0.0;
  std::optional<Mlp> net_;
};

// Deployed B_{t+1}(x) = min(b(x) + tau + epsilon0, ceiling).
struct LcbBaseline {
  BaselineModel b;
  double tau = 0.0;
  double lambda = 1.0;
  double epsilon0 = 0.0;
  double ceiling = 0.0;
  double delta = 0.1;

  double evaluate(const Vector& x_next) const;
  Vector evaluate_batch(const Matrix& X) const;

  nlohmann::json to_json() const;
  static LcbBaseline from_json(const nlohmann::json& j);
};

// Baselines B_1..B_{T+1}; B_{T+1} is a constant applied to the prior draw.
class LcbSystem {
 public:
  LcbSystem() = default;
  LcbSystem(int steps, double delta, double lambda_max, double epsilon0, double ceiling);

  // Every level pinned at the ceiling; the sampler then reduces to exact RS.
  static LcbSystem ceiling_only(int steps, double ceiling, double delta = 0.1);

  int steps() const { return steps_; }
  double delta() const { return delta_; }
  double lambda_max() const { return lambda_max_; }
  double epsilon0() const { return epsilon0_; }
  double ceiling() const { return ceiling_; }

  // level in 1..T+1
  LcbBaseline& at(int level);
  const LcbBaseline& at(int level) const;

  nlohmann::json to_json() const;
  static LcbSystem from_json(const nlohmann::json& j);

 private:
  int steps_ = 0;
  double delta_ = 0.1;
  double lambda_max_ = 12.0;
  double epsilon0_ = 0.0;
  double ceiling_ = 0.0;
  std::vector<LcbBaseline> levels_;  // index level - 1
};

// s_i = v_i - b_i.
std::vector<double> pair_scores(const Vector& values, const Vector& baseline);

// (1/l) log E e^{l s} + (1/l) log E e^{-l s} + (2/l) log(1/delta)
double objective_from_scores(std::span<const double> s, double lambda, double delta);
// (1/l) (log(1/delta) + log E e^{l s})
double tau_from_scores(std::span<const double> s, double lambda, double delta);
// Ternary search on [lo, hi], cross-checked against a 64-point grid.
double search_lambda_scores(std::span<const double> s, double delta, double lo, double hi, double tol = 1e-3);

double empirical_J(const PairBatch& batch, const ValueModel& value, const BaselineModel& b, double lambda, double delta);
double tau_hat(const PairBatch& batch, const ValueModel& value, const BaselineModel& b, double lambda, double delta);
double ternary_search_lambda(const PairBatch& batch, const ValueModel& value, const BaselineModel& b, double delta,
                             double lo, double hi, double tol = 1e-3);

struct BaselineOptConfig {
  std::vector<int> hidden{64, 64};
  double learning_rate = 1e-3;
  int steps = 200;  // gradient steps per fit_baseline call
  int mse_epochs = 20;
  std::size_t mse_batch = 256;
  std::uint64_t seed = 11;
};

// Objective and its gradient with respect to the parameters of b, given the
// value targets of the batch.
std::pair<double, Vector> objective_and_gradient(const Matrix& next, const Vector& values, const BaselineModel& b,
                                                 double lambda, double delta);

// Stateful Adam descent on the objective at fixed lambda.
class BaselineFitter {
 public:
  BaselineFitter(BaselineModel& b, double learning_rate);
  // One full-batch step; returns the objective before the step.
  double step(const Matrix& next, const Vector& values, double lambda, double delta);

 private:
  BaselineModel* b_;
  Vector params_;
  Adam adam_;
};

BaselineModel fit_baseline(const PairBatch& batch, const ValueModel& value, double delta, double lambda,
                           const BaselineOptConfig& cfg, std::optional<BaselineModel> warm_start = std::nullopt);
BaselineModel fit_baseline_on_values(const Matrix& next, const Vector& values, double delta, double lambda,
                                     const BaselineOptConfig& cfg, BaselineModel init);

// Least-squares regression of values on x_{t+1}.
BaselineModel mse_pretrain_baseline(const Matrix& next, const Vector& values, const BaselineOptConfig& cfg);
BaselineModel mse_pretrain_baseline(const PairBatch& batch, const ValueModel& value, const BaselineOptConfig& cfg);

// Closed-form upper baseline for v_t(x_t) given x_{t+1} under a Lipschitz reward.
double analytic_mog_baseline(const MixtureDiffusion& model, const RewardSpec& reward, const Vector& x_next, int t,
                             double delta);

}  // namespace lcb
