#include "fixtures.hpp"

#include "lcb/errors.hpp"
#include "lcb/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace lcb;
using namespace lcb::testing;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.delta = 0.1;
  cfg.particles = 600;
  cfg.heldout_particles = 600;
  cfg.refresh_rounds = 3;
  cfg.opt.hidden = {16};
  cfg.opt.mse_epochs = 5;
  cfg.opt.steps = 40;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("constant reward: every level sits just above the constant value") {
  const MixtureDiffusion model = two_cluster_model(6);
  const RewardSpec flat = RewardSpec::constant(0.4, 1.0, 1.0);
  const ValueModel value = ValueModel::analytic(model, flat);
  TrainConfig cfg = small_config();
  const TrainResult res = train_two_pass(model, value, cfg);
  const LcbBaseline& prior = res.system.at(7);
  CHECK(prior.evaluate(vec({0.0, 0.0})) == doctest::Approx(0.4 + std::log(1.0 / cfg.delta) / prior.lambda));
  for (int level = 1; level <= 7; ++level) {
    const LcbBaseline& lb = res.system.at(level);
    CHECK(lb.lambda == doctest::Approx(cfg.lambda_max).epsilon(1e-2));
    const double slack = std::log(1.0 / cfg.delta) / lb.lambda;
    CHECK(std::abs(lb.evaluate(vec({0.3, -2.0})) - (0.4 + slack)) < 0.02);
    CHECK(std::abs(lb.evaluate(vec({-6.0, 4.0})) - (0.4 + slack)) < 0.02);
  }
  for (const auto& r : res.report.levels) CHECK(r.heldout_exceedance == 0.0);
}

TEST_CASE("two-pass training on the two-cluster task") {
  const MixtureDiffusion model = two_cluster_model(8);
  const RewardSpec reward = left_tail_reward(0.5);
  const ValueModel value = ValueModel::analytic(model, reward);
  const TrainConfig cfg = small_config();
  const TrainResult res = train_two_pass(model, value, cfg);

  REQUIRE(res.report.levels.size() == 9);
  for (std::size_t i = 0; i < res.report.levels.size(); ++i) {
    const TimestepReport& r = res.report.levels[i];
    CHECK(r.level == 9 - static_cast<int>(i));
    CHECK(r.objective <= r.objective_at_one + 1e-9);
    CHECK(r.lambda >= 1.0 - 1e-9);
    CHECK(r.lambda <= cfg.lambda_max + 1e-9);
    const double n = static_cast<double>(r.heldout_pairs);
    const double se = std::sqrt(cfg.delta * (1.0 - cfg.delta) / n);
    CHECK(r.heldout_exceedance <= cfg.delta + 2.0 * se);
  }
  CHECK(res.report.scheme == "two_pass");

  const TrainResult again = train_two_pass(model, value, cfg);
  CHECK(again.system.to_json().dump() == res.system.to_json().dump());
}

TEST_CASE("sequential scheme produces a full system") {
  const MixtureDiffusion model = two_cluster_model(5);
  const RewardSpec reward = left_tail_reward(0.5);
  const ValueModel value = ValueModel::analytic(model, reward);
  const TrainResult res = train_sequential(model, value, small_config());
  REQUIRE(res.report.levels.size() == 6);
  CHECK(res.report.scheme == "sequential");
  for (int level = 1; level <= 6; ++level) CHECK(std::isfinite(res.system.at(level).tau));
}

TEST_CASE("particles that can never be accepted raise ParticleCollapse") {
  const MixtureDiffusion model = two_cluster_model(4);
  const RewardSpec flat = RewardSpec::constant(0.0, 0.01, 1.0);
  const ValueModel value = ValueModel::analytic(model, flat);
  TrainConfig cfg = small_config();
  cfg.epsilon0 = 50.0;
  cfg.advance_cap = 1;
  CHECK_THROWS_AS(train_two_pass(model, value, cfg), ParticleCollapse);
}

TEST_CASE("configuration validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.delta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lambda_max = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.particles = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
