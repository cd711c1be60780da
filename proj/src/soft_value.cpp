#include "lcb/soft_value.hpp"

#include "lcb/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lcb {

namespace {

constexpr int kQuadratureOrder = 64;
constexpr std::size_t kMaxComponents = 64;

// log E[exp(r(X))] for X ~ N(mean, sd^2) along the reward's coordinate.
double log_gaussian_reward_mgf(const RewardSpec& reward, double mean, double sd) {
  const double alpha = reward.temperature();
  if (sd <= 0.0) return reward.raw_of_coordinate(mean) / alpha;
  if (reward.kind() == RewardKind::CoordinateThreshold) {
    const double z = reward.direction() == Direction::Below ? (reward.threshold_value() - mean) / sd
                                                             : (mean - reward.threshold_value()) / sd;
    return std::log1p(std::expm1(reward.height() / alpha) * normal_cdf(z));
  }
  const QuadratureRule& rule = gauss_hermite(kQuadratureOrder);
  std::array<double, kQuadratureOrder> terms{};
  for (int i = 0; i < kQuadratureOrder; ++i)
    terms[i] = std::log(rule.weights[i]) + reward.raw_of_coordinate(mean + sd * rule.nodes[i]) / alpha;
  return logsumexp(terms);
}

void require_analytic(const RewardSpec& reward) {
  if (reward.kind() == RewardKind::Callback)
    throw std::invalid_argument("analytic value: callback rewards require the Monte Carlo path");
}

std::uint64_t hash_point(const Vector& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    h ^= std::bit_cast<std::uint64_t>(x(i));
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double analytic_value(const MixtureDiffusion& model, const RewardSpec& reward, const Vector& x, int t) {
  require_analytic(reward);
  if (t < 0 || t > model.steps()) throw std::out_of_range("analytic_value: timestep out of range");
  if (t == 0) return reward.scaled(x);
  if (reward.kind() == RewardKind::Constant) return reward.scaled(x);

  const std::size_t K = model.spec().components();
  if (K > kMaxComponents) throw std::invalid_argument("analytic_value: too many components");
  std::array<double, kMaxComponents> logw{};
  model.log_responsibilities_into(x, t, std::span<double>(logw.data(), K));

  const int j = reward.coordinate();
  const Matrix& gain = model.x0_gain(t);
  const double sd = std::sqrt(model.x0_covariance(t)(j, j));
  const double projected = gain.row(j).dot(x);
  const double shrink = std::sqrt(model.schedule().alpha_bar(t));
  for (std::size_t k = 0; k < K; ++k) {
    // offset_k = m^k - sqrt(abar) * gain * m^k
    const Vector& m = model.spec().means[k];
    const double mean_j = projected + m(j) - shrink * gain.row(j).dot(m);
    logw[k] += log_gaussian_reward_mgf(reward, mean_j, sd);
  }
  return logsumexp(std::span<const double>(logw.data(), K));
}

double analytic_terminal_value(const MixtureDiffusion& model, const RewardSpec& reward) {
  require_analytic(reward);
  if (reward.kind() == RewardKind::Constant) return reward.constant_value() / reward.temperature();
  const int j = reward.coordinate();
  const auto& spec = model.spec();
  const double sd = std::sqrt(spec.covariance(j, j));
  std::vector<double> terms;
  for (std::size_t k = 0; k < spec.components(); ++k)
    terms.push_back(std::log(spec.weights[k]) + log_gaussian_reward_mgf(reward, spec.means[k](j), sd));
  return logsumexp(terms);
}

double mc_value(const MixtureDiffusion& model, const RewardSpec& reward, const Vector& x, int t, std::size_t n_inner,
                Rng& rng) {
  if (n_inner < 1) throw std::invalid_argument("mc_value: n_inner must be positive");
  const double B = reward.effective_bound();
  if (t == 0) return std::clamp(reward.scaled(x), -B, B);
  std::vector<double> r(n_inner);
  for (auto& ri : r) ri = reward.scaled(model.sample_posterior_x0(x, t, rng));
  const double v = logsumexp(r) - std::log(static_cast<double>(n_inner));
  return std::clamp(v, -B, B);
}

std::string to_string(ValueMode mode) {
  switch (mode) {
    case ValueMode::Analytic: return "analytic";
    case ValueMode::MonteCarlo: return "monte_carlo";
    case ValueMode::Regression: return "regression";
  }
  return "unknown";
}

ValueMode value_mode_from_string(const std::string& s) {
  if (s == "analytic") return ValueMode::Analytic;
  if (s == "monte_carlo") return ValueMode::MonteCarlo;
  if (s == "regression") return ValueMode::Regression;
  throw std::invalid_argument("unknown value mode '" + s + "'");
}

void RegressionConfig::validate() const {
  if (n_trajectories < 1 || epochs < 1 || batch_size < 1)
    throw std::invalid_argument("regression config: counts must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("regression config: learning rate must be positive");
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("regression config: hidden widths must be positive");
}

ValueModel::ValueModel(const MixtureDiffusion& model, RewardSpec reward, ValueMode mode)
    : model_(&model), reward_(std::move(reward)), mode_(mode) {}

ValueModel ValueModel::analytic(const MixtureDiffusion& model, const RewardSpec& reward) {
  require_analytic(reward);
  ValueModel v(model, reward, ValueMode::Analytic);
  v.terminal_ = v.clip(analytic_terminal_value(model, reward));
  return v;
}

ValueModel ValueModel::monte_carlo(const MixtureDiffusion& model, const RewardSpec& reward, std::size_t n_inner,
                                   std::uint64_t seed) {
  if (n_inner < 1) throw std::invalid_argument("monte carlo value: n_inner must be positive");
  ValueModel v(model, reward, ValueMode::MonteCarlo);
  v.n_inner_ = n_inner;
  v.seed_ = seed;
  // Terminal value from unconditional data draws.
  Rng rng(derive_seed(seed, 0x7e2a1ULL));
  std::vector<double> r(n_inner);
  for (auto& ri : r) ri = reward.scaled(model.sample_data(rng));
  v.terminal_ = v.clip(logsumexp(r) - std::log(static_cast<double>(n_inner)));
  return v;
}

ValueModel ValueModel::regression(const MixtureDiffusion& model, const RewardSpec& reward, std::vector<Mlp> networks,
                                  double terminal_value, RegressionConfig cfg) {
  if (networks.size() != static_cast<std::size_t>(model.steps()) + 1)
    throw std::invalid_argument("regression value: expected one network per timestep");
  ValueModel v(model, reward, ValueMode::Regression);
  v.networks_ = std::move(networks);
  v.terminal_ = v.clip(terminal_value);
  v.regression_cfg_ = std::move(cfg);
  return v;
}

double ValueModel::clip(double v) const {
  const double B = bound();
  return std::clamp(v, -B, B);
}

double ValueModel::evaluate(const Vector& x, int t) const {
  if (t < 0 || t > steps()) throw std::out_of_range("value: timestep out of range");
  if (t == 0 && mode_ != ValueMode::Regression) return clip(reward_.scaled(x));
  switch (mode_) {
    case ValueMode::Analytic:
      return clip(analytic_value(*model_, reward_, x, t));
    case ValueMode::MonteCarlo: {
      Rng rng(derive_seed(seed_, hash_point(x), static_cast<std::uint64_t>(t)));
      return mc_value(*model_, reward_, x, t, n_inner_, rng);
    }
    case ValueMode::Regression: {
      const Mlp& net = networks_.at(t);
      if (net.empty()) throw std::logic_error("value: regression network for this timestep is not fitted");
      return clip(std::log(regression_output(net, x, bound())));
    }
  }
  return 0.0;
}

Vector ValueModel::evaluate_batch(const Matrix& X, int t) const {
  Vector out(X.cols());
  if (mode_ == ValueMode::Regression) {
    const Mlp& net = networks_.at(t);
    if (net.empty()) throw std::logic_error("value: regression network for this timestep is not fitted");
    const Vector z = net.forward(X);
    const double B = bound();
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = clip(B * std::tanh(z(i)));
    return out;
  }
  for (Eigen::Index i = 0; i < X.cols(); ++i) out(i) = evaluate(X.col(i), t);
  return out;
}

nlohmann::json ValueModel::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode_);
  j["steps"] = steps();
  j["bound"] = bound();
  j["terminal_value"] = terminal_;
  if (mode_ == ValueMode::MonteCarlo) {
    j["n_inner"] = n_inner_;
    j["seed"] = seed_;
  }
  if (mode_ == ValueMode::Regression) {
    j["family"] = {{"kind", "mlp_tanh"}, {"hidden", regression_cfg_.hidden}};
    j["seed"] = regression_cfg_.seed;
    j["n_trajectories"] = regression_cfg_.n_trajectories;
    j["epochs"] = regression_cfg_.epochs;
    nlohmann::json nets = nlohmann::json::array();
    for (const auto& net : networks_) nets.push_back(net.to_json());
    j["networks"] = std::move(nets);
  }
  return j;
}

ValueModel ValueModel::from_json(const nlohmann::json& j, const MixtureDiffusion& model, const RewardSpec& reward) {
  const ValueMode mode = value_mode_from_string(j.at("mode").get<std::string>());
  if (j.at("steps").get<int>() != model.steps()) throw ArtifactMismatch("value artifact: step count differs from config");
  if (std::abs(j.at("bound").get<double>() - reward.effective_bound()) > 1e-12)
    throw ArtifactMismatch("value artifact: reward bound differs from config");
  switch (mode) {
    case ValueMode::Analytic:
      return analytic(model, reward);
    case ValueMode::MonteCarlo:
      return monte_carlo(model, reward, j.at("n_inner").get<std::size_t>(), j.at("seed").get<std::uint64_t>());
    case ValueMode::Regression: {
      RegressionConfig cfg;
      cfg.hidden = j.at("family").at("hidden").get<std::vector<int>>();
      cfg.seed = j.at("seed").get<std::uint64_t>();
      cfg.n_trajectories = j.at("n_trajectories").get<std::size_t>();
      cfg.epochs = j.at("epochs").get<int>();
      std::vector<Mlp> nets;
      for (const auto& n : j.at("networks")) nets.push_back(Mlp::from_json(n));
      return regression(model, reward, std::move(nets), j.at("terminal_value").get<double>(), cfg);
    }
  }
  throw std::logic_error("unreachable");
}

double regression_output(const Mlp& net, const Vector& x, double bound) {
  return std::exp(bound * std::tanh(net.forward(x)));
}

std::pair<double, Vector> regression_loss_and_gradient(const Mlp& net, const Matrix& X, const Vector& targets,
                                                       double bound) {
  Mlp::Tape tape;
  const Vector z = net.forward(X, tape);
  const double n = static_cast<double>(X.cols());
  Vector dz(z.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double th = std::tanh(z(i));
    const double u = bound * th;
    const double h = std::exp(u);
    loss += h - targets(i) * u;
    dz(i) = (h - targets(i)) * bound * (1.0 - th * th) / n;
  }
  return {loss / n, net.backward(tape, dz)};
}

ValueModel fit_regression_values(const MixtureDiffusion& model, const RewardSpec& reward, const RegressionConfig& cfg) {
  cfg.validate();
  const int T = model.steps();
  const Eigen::Index d = model.dim();
  const std::size_t n = cfg.n_trajectories;
  const double B = reward.effective_bound();

  std::vector<Matrix> states(T + 1, Matrix(d, static_cast<Eigen::Index>(n)));
  Vector targets(static_cast<Eigen::Index>(n));
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, 0x7a1eULL, i));
    const Trajectory traj = model.sample_trajectory(rng);
    for (int t = 0; t <= T; ++t) states[t].col(static_cast<Eigen::Index>(i)) = traj.at_level(t);
    targets(static_cast<Eigen::Index>(i)) = std::exp(reward.scaled(traj.endpoint()));
  });

  const double mean_target = targets.mean();
  const double terminal = std::log(mean_target);
  const double bias0 = std::atanh(std::clamp(terminal / B, -0.999, 0.999));

  std::vector<Mlp> nets(T + 1);
  std::vector<std::string> failures(T + 1);
  parallel_for(static_cast<std::size_t>(T) + 1, [&](std::size_t idx) {
    const int t = static_cast<int>(idx);
    Mlp net(static_cast<int>(d), cfg.hidden, derive_seed(cfg.seed, 0xbe11ULL, static_cast<std::uint64_t>(t)));
    net.zero_output_weights();
    net.set_output_bias(bias0);
    Vector params = net.parameters();
    Adam adam(params.size(), AdamConfig{cfg.learning_rate});
    Rng rng(derive_seed(cfg.seed, 0x5417ULL, static_cast<std::uint64_t>(t)));
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Eigen::Index bs = static_cast<Eigen::Index>(std::min(cfg.batch_size, n));
    Matrix Xb(d, bs);
    Vector yb(bs);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(bs)) {
        const Eigen::Index len = static_cast<Eigen::Index>(std::min<std::size_t>(bs, n - start));
        Xb.resize(d, len);
        yb.resize(len);
        for (Eigen::Index c = 0; c < len; ++c) {
          Xb.col(c) = states[t].col(order[start + static_cast<std::size_t>(c)]);
          yb(c) = targets(order[start + static_cast<std::size_t>(c)]);
        }
        auto [loss, grad] = regression_loss_and_gradient(net, Xb, yb, B);
        if (!std::isfinite(loss) || !grad.allFinite()) {
          failures[t] = "value regression diverged at t=" + std::to_string(t) + ", epoch " + std::to_string(epoch);
          return;
        }
        adam.step(params, grad);
        net.set_parameters(params);
      }
    }
    nets[t] = std::move(net);
  });
  for (const auto& f : failures)
    if (!f.empty()) throw FitDivergence(f);
  return ValueModel::regression(model, reward, std::move(nets), terminal, cfg);
}

}  // namespace lcb
