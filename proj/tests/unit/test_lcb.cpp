#include "fixtures.hpp"

#include "lcb/errors.hpp"
#include "lcb/lcb.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace lcb;
using namespace lcb::testing;

namespace {

std::vector<double> gaussian_scores(std::size_t n, double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> s(n);
  for (auto& x : s) x = sd * rng.normal();
  return s;
}

}  // namespace

TEST_CASE("objective anchors") {
  const std::vector<double> zeros(10, 0.0);
  CHECK(objective_from_scores(zeros, 2.0, 0.1) == doctest::Approx(2.302585).epsilon(1e-6));
  CHECK(tau_from_scores(zeros, 2.0, 0.1) == doctest::Approx(1.151293).epsilon(1e-6));
}

TEST_CASE("objective is invariant to shifting the baseline") {
  auto s = gaussian_scores(500, 1.3, 4);
  const double j = objective_from_scores(s, 3.7, 0.1);
  for (auto& x : s) x -= 0.8125;
  CHECK(std::abs(objective_from_scores(s, 3.7, 0.1) - j) < 1e-10);
}

TEST_CASE("objective matches naive summation") {
  const std::vector<double> s{0.3, -1.2, 0.05, 0.9, -0.4};
  const double lambda = 3.0, delta = 0.1;
  double plus = 0.0, minus = 0.0;
  for (double x : s) {
    plus += std::exp(lambda * x);
    minus += std::exp(-lambda * x);
  }
  const double naive = (std::log(plus / 5.0) + std::log(minus / 5.0) + 2.0 * std::log(1.0 / delta)) / lambda;
  CHECK(std::abs(objective_from_scores(s, lambda, delta) - naive) < 1e-9);
}

TEST_CASE("objective is never below its slack term") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gaussian_scores(100, 0.7, seed);
    for (double lambda : {1.0, 4.0, 12.0})
      CHECK(objective_from_scores(s, lambda, 0.1) - 2.0 * std::log(10.0) / lambda >= -1e-9);
  }
}

TEST_CASE("tau") {
  const auto s = gaussian_scores(200, 0.5, 8);
  SUBCASE("no slack at delta = 1") { CHECK(tau_from_scores(s, 2.5, 1.0) == doctest::Approx(log_mean_exp(s, 2.5) / 2.5)); }
  SUBCASE("strictly decreasing in delta") {
    const double a = tau_from_scores(s, 2.5, 0.01), b = tau_from_scores(s, 2.5, 0.1), c = tau_from_scores(s, 2.5, 0.5);
    CHECK(a > b);
    CHECK(b > c);
  }
}

TEST_CASE("scores reject non-finite values") {
  Vector v(2), b(2);
  v << 1.0, std::numeric_limits<double>::quiet_NaN();
  b << 0.0, 0.0;
  CHECK_THROWS_AS(pair_scores(v, b), std::domain_error);
}

TEST_CASE("lambda search agrees with a dense grid") {
  const double lo = 1.0, hi = 12.0, delta = 0.1;
  const double cell = (hi - lo) / 199.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(77, seed));
    const double sd = 0.1 + 1.5 * rng.uniform_open0();
    auto s = gaussian_scores(300, sd, seed + 1000);
    for (std::size_t i = 0; i < s.size(); i += 7) s[i] += rng.normal();
    const double found = search_lambda_scores(s, delta, lo, hi);
    double best = lo, best_j = std::numeric_limits<double>::infinity();
    for (int g = 0; g < 200; ++g) {
      const double l = lo + g * cell;
      const double j = objective_from_scores(s, l, delta);
      if (j < best_j) best_j = j, best = l;
    }
    CAPTURE(seed);
    CHECK(std::abs(found - best) <= 2.0 * cell);
    CHECK(objective_from_scores(s, found, delta) <= best_j + 1e-9);
  }
}

TEST_CASE("lambda search on sub-Gaussian scores finds the closed-form optimum") {
  // J(l) = l sigma^2 + 2 log(1/delta) / l for Gaussian scores.
  const double sigma = 0.5, delta = 0.01;
  const auto s = gaussian_scores(1000000, sigma, 5);
  const double found = search_lambda_scores(s, delta, 1.0, 12.0);
  const double optimum = std::sqrt(2.0 * std::log(1.0 / delta)) / sigma;
  CHECK(optimum == doctest::Approx(6.0697).epsilon(1e-4));
  CHECK(std::abs(found - optimum) <= 0.1 * optimum);
}

TEST_CASE("constant scores push lambda to the upper end") {
  const std::vector<double> s(50, 0.37);
  CHECK(search_lambda_scores(s, 0.1, 1.0, 12.0) == doctest::Approx(12.0).epsilon(1e-3));
}

TEST_CASE("objective gradient matches finite differences") {
  Rng rng(3);
  const Eigen::Index m = 64;
  Matrix X(2, m);
  Vector v(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    X.col(i) = rng.normal_vector(2);
    v(i) = std::sin(X(0, i)) + 0.3 * rng.normal();
  }
  BaselineModel b = BaselineModel::network(Mlp(2, {8, 8}, 4));
  const auto [j, grad] = objective_and_gradient(X, v, b, 2.5, 0.1);
  CHECK(j == doctest::Approx(objective_from_scores(pair_scores(v, b.evaluate_batch(X)), 2.5, 0.1)));
  const Vector p0 = b.parameters();
  for (int k = 0; k < 10; ++k) {
    const auto idx = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(p0.size())));
    const double h = 1e-6;
    Vector p = p0;
    p(idx) += h;
    b.set_parameters(p);
    const double up = objective_and_gradient(X, v, b, 2.5, 0.1).first;
    p(idx) -= 2 * h;
    b.set_parameters(p);
    const double down = objective_and_gradient(X, v, b, 2.5, 0.1).first;
    b.set_parameters(p0);
    const double fd = (up - down) / (2 * h);
    CAPTURE(idx);
    CHECK(std::abs(fd - grad(idx)) <= 1e-4 * std::max(std::abs(fd), 1e-4));
  }
}

TEST_CASE("zero baseline with constant scores has zero gradient") {
  const Matrix X = Matrix::Random(2, 30);
  const Vector v = Vector::Constant(30, 0.6);
  const auto [j, grad] = objective_and_gradient(X, v, BaselineModel::constant(0.0), 1.0, 0.1);
  CHECK(grad.size() == 1);
  CHECK(grad(0) == 0.0);
  (void)j;
}

TEST_CASE("baseline fitting") {
  BaselineOptConfig cfg;
  cfg.hidden = {16, 16};
  cfg.learning_rate = 1e-2;
  cfg.mse_epochs = 30;
  cfg.steps = 300;
  Rng rng(6);

  SUBCASE("constant values give a constant baseline") {
    Matrix X(2, 2000);
    for (Eigen::Index i = 0; i < X.cols(); ++i) X.col(i) = 3.0 * rng.normal_vector(2);
    const Vector v = Vector::Constant(X.cols(), 1.7);
    const BaselineModel b = mse_pretrain_baseline(X, v, cfg);
    const Vector out = b.evaluate_batch(X);
    CHECK((out.array() - 1.7).abs().maxCoeff() < 1e-3);
    // Adam keeps jittering at the learning-rate scale around the optimum.
    const BaselineModel fitted = fit_baseline_on_values(X, v, 0.1, 1.0, cfg, b);
    CHECK((fitted.evaluate_batch(X).array() - 1.7).abs().maxCoeff() < 5.0 * cfg.learning_rate);
  }

  SUBCASE("objective fit beats the constant-mean baseline on held-out pairs") {
    const auto draw = [&](Eigen::Index n, Matrix& X, Vector& v) {
      X.resize(1, n);
      v.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        X(0, i) = 2.0 * rng.normal();
        v(i) = std::tanh(X(0, i)) + 0.2 * (rng.uniform_open0() - 0.5);
      }
    };
    Matrix X, Xh;
    Vector v, vh;
    draw(4000, X, v);
    draw(4000, Xh, vh);
    BaselineModel b = mse_pretrain_baseline(X, v, cfg);
    b = fit_baseline_on_values(X, v, 0.1, 1.0, cfg, b);
    const double fitted = objective_from_scores(pair_scores(vh, b.evaluate_batch(Xh)), 1.0, 0.1);
    const double flat = objective_from_scores(pair_scores(vh, Vector::Constant(vh.size(), v.mean())), 1.0, 0.1);
    CHECK(fitted <= flat);
  }
}

TEST_CASE("regression baseline on diffusion pairs") {
  const MixtureDiffusion model = two_cluster_model();
  const RewardSpec reward = left_tail_reward();
  const ValueModel value = ValueModel::analytic(model, reward);
  const int t = 8;
  Rng rng(12);
  const auto make = [&](Eigen::Index n) {
    PairBatch batch;
    batch.t = t;
    batch.next.resize(2, n);
    batch.current.resize(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      batch.next.col(i) = model.sample_forward_marginal(t + 1, rng);
      batch.current.col(i) = model.sample_reverse_step(batch.next.col(i), t, rng);
    }
    return batch;
  };
  const PairBatch train = make(20000), held = make(5000);
  BaselineOptConfig cfg;
  cfg.hidden = {32, 32};
  cfg.learning_rate = 3e-3;
  cfg.mse_epochs = 40;
  const BaselineModel b = mse_pretrain_baseline(train, value, cfg);

  Vector vh(held.next.cols());
  for (Eigen::Index i = 0; i < vh.size(); ++i) vh(i) = value.evaluate(held.current.col(i), t);
  const double var = (vh.array() - vh.mean()).square().mean();
  const double mse = (b.evaluate_batch(held.next) - vh).squaredNorm() / static_cast<double>(vh.size());
  CHECK(mse < var);

  // Conditional mean at probe states by direct Monte Carlo.
  int close = 0;
  for (int p = 0; p < 20; ++p) {
    const Vector x = held.next.col(p);
    double acc = 0.0;
    for (int i = 0; i < 4000; ++i) acc += value.evaluate(model.sample_reverse_step(x, t, rng), t);
    close += std::abs(acc / 4000.0 - b.evaluate(x)) <= 0.1 ? 1 : 0;
  }
  CHECK(close == 20);
}

TEST_CASE("analytic mixture baseline") {
  const MixtureDiffusion model = two_cluster_model();
  SUBCASE("constant reward reduces to the slack term") {
    const RewardSpec c = RewardSpec::constant(0.5, 1.0, 1.0);
    const int t = 4;
    const Vector x = vec({1.0, -2.0});
    double max_norm = 0.0;
    for (const auto& m : model.spec().means) max_norm = std::max(max_norm, m.norm());
    const double lphi = 2.0 * spectral_norm_symmetric(model.level_precision(t)) * max_norm;
    const double beta = spectral_norm_symmetric(model.reverse_covariance(t));
    CHECK(analytic_mog_baseline(model, c, x, t, 0.1) ==
          doctest::Approx(0.5 + lphi * std::sqrt(2.0 * beta * std::log(10.0))).epsilon(1e-10));
    CHECK(analytic_mog_baseline(model, c, x, t, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("indicator rewards are rejected") {
    CHECK_THROWS(analytic_mog_baseline(model, left_tail_reward(), vec({0.0, 0.0}), 3, 0.1));
  }
  SUBCASE("exceedance under the smoothed reward stays below delta") {
    const RewardSpec smooth = RewardSpec::logistic(0, -7.0, Direction::Below, 1.0, 0.5);
    const double delta = 0.1;
    Rng rng(14);
    for (int t : {2, 10}) {
      int exceed = 0;
      const int n = 10000;
      for (int i = 0; i < n; ++i) {
        const Vector next = model.sample_forward_marginal(t + 1, rng);
        const Vector x = model.sample_reverse_step(next, t, rng);
        exceed += analytic_value(model, smooth, x, t) > analytic_mog_baseline(model, smooth, next, t, delta) ? 1 : 0;
      }
      const double rate = static_cast<double>(exceed) / n;
      CHECK(rate <= delta + 1.96 * std::sqrt(delta * (1 - delta) / n));
    }
  }
}

TEST_CASE("deployed baseline") {
  LcbBaseline lb;
  lb.b = BaselineModel::constant(1.0);
  lb.tau = 0.5;
  lb.ceiling = 5.0;
  const Vector x = vec({0.0, 0.0});
  CHECK(lb.evaluate(x) == doctest::Approx(1.5));
  lb.b.shift(0.75);
  lb.tau -= 0.75;
  CHECK(lb.evaluate(x) == doctest::Approx(1.5));
  lb.tau = 10.0;
  CHECK(lb.evaluate(x) == 5.0);
  lb.tau = 0.5;
  lb.epsilon0 = 0.25;
  CHECK(lb.evaluate(x) == doctest::Approx(2.5));
}

TEST_CASE("baseline system serialisation") {
  LcbSystem sys(3, 0.2, 12.0, 0.0, 5.0);
  sys.at(4).b = BaselineModel::constant(0.0);
  sys.at(4).tau = 0.3;
  sys.at(2).b = BaselineModel::network(Mlp(2, {4}, 1));
  sys.at(2).tau = 0.7;
  sys.at(2).lambda = 3.5;
  const LcbSystem back = LcbSystem::from_json(sys.to_json());
  CHECK(back.steps() == 3);
  CHECK(back.delta() == 0.2);
  const Vector x = vec({0.4, -0.2});
  for (int level = 1; level <= 4; ++level) CHECK(back.at(level).evaluate(x) == sys.at(level).evaluate(x));
  CHECK(back.at(2).lambda == 3.5);
  const LcbSystem ceil = LcbSystem::ceiling_only(3, 5.0);
  for (int level = 1; level <= 4; ++level) CHECK(ceil.at(level).evaluate(x) == 5.0);
  CHECK_THROWS(sys.at(0));
  CHECK_THROWS(sys.at(5));
}
