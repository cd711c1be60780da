#include "lcb/lcb.hpp"

#include "lcb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lcb {

void PairBatch::validate() const {
  if (next.cols() < 2) throw std::invalid_argument("pair batch: at least two pairs required");
  if (next.cols() != current.cols() || next.rows() != current.rows())
    throw std::invalid_argument("pair batch: shape mismatch");
  if (!next.allFinite() || !current.allFinite()) throw std::invalid_argument("pair batch: non-finite point");
}

BaselineModel BaselineModel::constant(double c) {
  BaselineModel b;
  b.constant_ = c;
  return b;
}

BaselineModel BaselineModel::network(Mlp net) {
  BaselineModel b;
  b.net_ = std::move(net);
  return b;
}

double BaselineModel::evaluate(const Vector& x) const { return net_ ? net_->forward(x) : constant_; }

Vector BaselineModel::evaluate_batch(const Matrix& X) const {
  if (net_) return net_->forward(X);
  return Vector::Constant(X.cols(), constant_);
}

Vector BaselineModel::parameters() const {
  if (net_) return net_->parameters();
  return Vector::Constant(1, constant_);
}

void BaselineModel::set_parameters(const Vector& p) {
  if (net_) {
    net_->set_parameters(p);
  } else {
    if (p.size() != 1) throw std::invalid_argument("baseline: constant model has one parameter");
    constant_ = p(0);
  }
}

Vector BaselineModel::gradient(const Matrix& X, const Vector& dout) const {
  if (!net_) return Vector::Constant(1, dout.sum());
  Mlp::Tape tape;
  net_->forward(X, tape);
  return net_->backward(tape, dout);
}

void BaselineModel::shift(double c) {
  if (net_)
    net_->set_output_bias(net_->output_bias() + c);
  else
    constant_ += c;
}

nlohmann::json BaselineModel::to_json() const {
  if (net_) return {{"kind", "network"}, {"network", net_->to_json()}};
  return {{"kind", "constant"}, {"value", constant_}};
}

BaselineModel BaselineModel::from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "constant") return constant(j.at("value").get<double>());
  if (kind == "network") return network(Mlp::from_json(j.at("network")));
  throw ArtifactMismatch("baseline: unknown model kind '" + kind + "'");
}

double LcbBaseline::evaluate(const Vector& x_next) const {
  return std::min(b.evaluate(x_next) + tau + epsilon0, ceiling);
}

Vector LcbBaseline::evaluate_batch(const Matrix& X) const {
  Vector out = b.evaluate_batch(X);
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = std::min(out(i) + tau + epsilon0, ceiling);
  return out;
}

nlohmann::json LcbBaseline::to_json() const {
  return {{"lambda", lambda}, {"tau", tau}, {"epsilon0", epsilon0}, {"ceiling", ceiling}, {"delta", delta}, {"b", b.to_json()}};
}

LcbBaseline LcbBaseline::from_json(const nlohmann::json& j) {
  LcbBaseline l;
  l.lambda = j.at("lambda").get<double>();
  l.tau = j.at("tau").get<double>();
  l.epsilon0 = j.at("epsilon0").get<double>();
  l.ceiling = j.at("ceiling").get<double>();
  l.delta = j.at("delta").get<double>();
  l.b = BaselineModel::from_json(j.at("b"));
  return l;
}

LcbSystem::LcbSystem(int steps, double delta, double lambda_max, double epsilon0, double ceiling)
    : steps_(steps), delta_(delta), lambda_max_(lambda_max), epsilon0_(epsilon0), ceiling_(ceiling) {
  if (steps < 1) throw std::invalid_argument("lcb system: steps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("lcb system: delta must lie in (0, 1)");
  if (!(lambda_max > 1.0)) throw std::invalid_argument("lcb system: lambda_max must exceed 1");
  levels_.resize(static_cast<std::size_t>(steps) + 1);
  for (auto& l : levels_) {
    l.b = BaselineModel::constant(ceiling);
    l.ceiling = ceiling;
    l.epsilon0 = epsilon0;
    l.delta = delta;
  }
}

LcbSystem LcbSystem::ceiling_only(int steps, double ceiling, double delta) {
  return LcbSystem(steps, delta, 12.0, 0.0, ceiling);
}

LcbBaseline& LcbSystem::at(int level) {
  if (level < 1 || level > steps_ + 1) throw std::out_of_range("lcb system: level out of range");
  return levels_[static_cast<std::size_t>(level) - 1];
}

const LcbBaseline& LcbSystem::at(int level) const {
  if (level < 1 || level > steps_ + 1) throw std::out_of_range("lcb system: level out of range");
  return levels_[static_cast<std::size_t>(level) - 1];
}

nlohmann::json LcbSystem::to_json() const {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : levels_) levels.push_back(l.to_json());
  std::vector<int> hidden;
  for (const auto& l : levels_)
    if (!l.b.is_constant()) {
      hidden = l.b.net().hidden();
      break;
    }
  return {{"steps", steps_},
          {"delta", delta_},
          {"lambda_max", lambda_max_},
          {"epsilon0", epsilon0_},
          {"ceiling", ceiling_},
          {"family", {{"kind", "mlp_tanh"}, {"hidden", hidden}}},
          {"levels", std::move(levels)}};
}

LcbSystem LcbSystem::from_json(const nlohmann::json& j) {
  LcbSystem s(j.at("steps").get<int>(), j.at("delta").get<double>(), j.at("lambda_max").get<double>(),
              j.at("epsilon0").get<double>(), j.at("ceiling").get<double>());
  const auto& levels = j.at("levels");
  if (levels.size() != static_cast<std::size_t>(s.steps_) + 1) throw ArtifactMismatch("lcb artifact: level count mismatch");
  for (std::size_t i = 0; i < levels.size(); ++i) s.levels_[i] = LcbBaseline::from_json(levels[i]);
  return s;
}

std::vector<double> pair_scores(const Vector& values, const Vector& baseline) {
  if (values.size() != baseline.size()) throw std::invalid_argument("pair_scores: size mismatch");
  std::vector<double> s(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    s[static_cast<std::size_t>(i)] = values(i) - baseline(i);
    if (!std::isfinite(s[static_cast<std::size_t>(i)])) throw std::domain_error("pair_scores: non-finite score");
  }
  return s;
}

double objective_from_scores(std::span<const double> s, double lambda, double delta) {
  if (!(lambda > 0.0)) throw std::invalid_argument("objective: lambda must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("objective: delta must lie in (0, 1]");
  return (log_mean_exp(s, lambda) + log_mean_exp(s, -lambda) + 2.0 * std::log(1.0 / delta)) / lambda;
}

double tau_from_scores(std::span<const double> s, double lambda, double delta) {
  if (!(lambda > 0.0)) throw std::invalid_argument("tau: lambda must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("tau: delta must lie in (0, 1]");
  return (std::log(1.0 / delta) + log_mean_exp(s, lambda)) / lambda;
}

double search_lambda_scores(std::span<const double> s, double delta, double lo, double hi, double tol) {
  if (!(hi > lo)) throw std::invalid_argument("lambda search: empty interval");
  if (!(tol > 0.0)) throw std::invalid_argument("lambda search: tolerance must be positive");
  auto J = [&](double l) { return objective_from_scores(s, l, delta); };
  auto ternary = [&](double a, double b) {
    while (b - a > tol) {
      const double m1 = a + (b - a) / 3.0;
      const double m2 = b - (b - a) / 3.0;
      if (J(m1) <= J(m2))
        b = m2;
      else
        a = m1;
    }
    return 0.5 * (a + b);
  };
  double best = ternary(lo, hi);
  double best_j = J(best);
  for (double edge : {lo, hi}) {
    const double je = J(edge);
    if (je < best_j) {
      best = edge;
      best_j = je;
    }
  }

  // Grid sanity pass; refine around the grid argmin if it beats the search.
  constexpr int kGrid = 64;
  int arg = 0;
  double grid_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const double l = lo + (hi - lo) * i / (kGrid - 1);
    const double j = J(l);
    if (j < grid_min) {
      grid_min = j;
      arg = i;
    }
  }
  if (grid_min < best_j - 1e-12) {
    const double step = (hi - lo) / (kGrid - 1);
    const double a = std::max(lo, lo + step * (arg - 1));
    const double b = std::min(hi, lo + step * (arg + 1));
    double cand = ternary(a, b);
    if (J(cand) > grid_min) cand = lo + step * arg;
    best = cand;
  }
  return best;
}

namespace {

std::vector<double> batch_scores(const PairBatch& batch, const ValueModel& value, const BaselineModel& b) {
  batch.validate();
  return pair_scores(value.evaluate_batch(batch.current, batch.t), b.evaluate_batch(batch.next));
}

}  // namespace

double empirical_J(const PairBatch& batch, const ValueModel& value, const BaselineModel& b, double lambda, double delta) {
  return objective_from_scores(batch_scores(batch, value, b), lambda, delta);
}

double tau_hat(const PairBatch& batch, const ValueModel& value, const BaselineModel& b, double lambda, double delta) {
  return tau_from_scores(batch_scores(batch, value, b), lambda, delta);
}

double ternary_search_lambda(const PairBatch& batch, const ValueModel& value, const BaselineModel& b, double delta,
                             double lo, double hi, double tol) {
  return search_lambda_scores(batch_scores(batch, value, b), delta, lo, hi, tol);
}

std::pair<double, Vector> objective_and_gradient(const Matrix& next, const Vector& values, const BaselineModel& b,
                                                 double lambda, double delta) {
  const std::vector<double> s = pair_scores(values, b.evaluate_batch(next));
  const double J = objective_from_scores(s, lambda, delta);
  std::vector<double> wplus(s.size()), wminus(s.size());
  softmax(s, lambda, wplus);
  softmax(s, -lambda, wminus);
  Vector dout(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) dout(static_cast<Eigen::Index>(i)) = wminus[i] - wplus[i];
  return {J, b.gradient(next, dout)};
}

BaselineFitter::BaselineFitter(BaselineModel& b, double learning_rate)
    : b_(&b), params_(b.parameters()), adam_(static_cast<std::size_t>(params_.size()), AdamConfig{learning_rate}) {}

double BaselineFitter::step(const Matrix& next, const Vector& values, double lambda, double delta) {
  auto [J, grad] = objective_and_gradient(next, values, *b_, lambda, delta);
  if (!std::isfinite(J) || !grad.allFinite()) throw FitDivergence("baseline fit: non-finite objective");
  adam_.step(params_, grad);
  b_->set_parameters(params_);
  return J;
}

BaselineModel fit_baseline_on_values(const Matrix& next, const Vector& values, double delta, double lambda,
                                     const BaselineOptConfig& cfg, BaselineModel init) {
  if (!(lambda >= 1.0)) throw std::invalid_argument("fit_baseline: lambda must be at least 1");
  BaselineFitter fitter(init, cfg.learning_rate);
  for (int i = 0; i < cfg.steps; ++i) fitter.step(next, values, lambda, delta);
  return init;
}

BaselineModel fit_baseline(const PairBatch& batch, const ValueModel& value, double delta, double lambda,
                           const BaselineOptConfig& cfg, std::optional<BaselineModel> warm_start) {
  batch.validate();
  const Vector values = value.evaluate_batch(batch.current, batch.t);
  BaselineModel init = warm_start ? std::move(*warm_start) : mse_pretrain_baseline(batch.next, values, cfg);
  return fit_baseline_on_values(batch.next, values, delta, lambda, cfg, std::move(init));
}

BaselineModel mse_pretrain_baseline(const Matrix& next, const Vector& values, const BaselineOptConfig& cfg) {
  const std::size_t n = static_cast<std::size_t>(next.cols());
  if (n < 1) throw std::invalid_argument("mse_pretrain_baseline: empty batch");
  Mlp net(static_cast<int>(next.rows()), cfg.hidden, derive_seed(cfg.seed, 0xba5eULL));
  net.zero_output_weights();
  net.set_output_bias(values.mean());
  Vector params = net.parameters();
  Adam adam(static_cast<std::size_t>(params.size()), AdamConfig{cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, 0x5107ULL));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t bs = std::min(cfg.mse_batch, n);
  Matrix Xb;
  Vector yb;
  Mlp::Tape tape;
  for (int epoch = 0; epoch < cfg.mse_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += bs) {
      const Eigen::Index len = static_cast<Eigen::Index>(std::min(bs, n - start));
      Xb.resize(next.rows(), len);
      yb.resize(len);
      for (Eigen::Index c = 0; c < len; ++c) {
        Xb.col(c) = next.col(order[start + static_cast<std::size_t>(c)]);
        yb(c) = values(order[start + static_cast<std::size_t>(c)]);
      }
      const Vector pred = net.forward(Xb, tape);
      const Vector dout = 2.0 * (pred - yb) / static_cast<double>(len);
      if (!dout.allFinite()) throw FitDivergence("baseline pretraining: non-finite loss");
      adam.step(params, net.backward(tape, dout));
      net.set_parameters(params);
    }
  }
  return BaselineModel::network(std::move(net));
}

BaselineModel mse_pretrain_baseline(const PairBatch& batch, const ValueModel& value, const BaselineOptConfig& cfg) {
  batch.validate();
  return mse_pretrain_baseline(batch.next, value.evaluate_batch(batch.current, batch.t), cfg);
}

double analytic_mog_baseline(const MixtureDiffusion& model, const RewardSpec& reward, const Vector& x_next, int t,
                             double delta) {
  if (t < 0 || t >= model.steps()) throw std::out_of_range("analytic_mog_baseline: timestep out of range");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("analytic_mog_baseline: delta must lie in (0, 1]");
  const double Lr = reward.lipschitz();
  if (!std::isfinite(Lr)) throw std::invalid_argument("analytic_mog_baseline: reward is not Lipschitz");

  const std::size_t K = model.spec().components();
  const double post_norm = t == 0 ? 0.0 : spectral_norm_symmetric(model.x0_covariance(t));
  auto phi = [&](const Vector& x) {
    const Vector logw = model.log_responsibilities(x, t);
    std::vector<double> terms(K);
    for (std::size_t k = 0; k < K; ++k)
      terms[k] = reward.scaled(model.x0_component_mean(x, t, k)) + 0.5 * Lr * Lr * post_norm + logw(static_cast<Eigen::Index>(k));
    return logsumexp(terms);
  };

  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) peak = std::max(peak, phi(model.reverse_component_mean(x_next, t, k)));

  double max_mean = 0.0;
  for (const auto& m : model.spec().means) max_mean = std::max(max_mean, m.norm());
  const Matrix& gain = model.x0_gain(t);
  const double gain_norm = Eigen::JacobiSVD<Matrix>(gain).singularValues()(0);
  const double lip = Lr * gain_norm + 2.0 * spectral_norm_symmetric(model.level_precision(t)) * max_mean;
  const double spread = spectral_norm_symmetric(model.reverse_covariance(t));
  return peak + lip * std::sqrt(2.0 * spread * std::log(1.0 / delta));
}

}  // namespace lcb
