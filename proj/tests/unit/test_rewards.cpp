#include "fixtures.hpp"

#include "lcb/rewards.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace lcb;
using namespace lcb::testing;

TEST_CASE("left-tail indicator") {
  const RewardSpec r = left_tail_reward();
  CHECK(r.raw(vec({-8.0, 0.0})) == 1.0);
  CHECK(r.raw(vec({0.0, 0.0})) == 0.0);
  CHECK(r.raw(vec({-7.0, 0.0})) == 0.0);
  CHECK(r.scaled(vec({-8.0, 3.0})) == doctest::Approx(5.0));
  CHECK(r.effective_bound() == doctest::Approx(5.0));
  CHECK(r.max_raw() == 1.0);
  CHECK(std::isinf(r.lipschitz()));
}

TEST_CASE("right-tail indicator") {
  const RewardSpec r = RewardSpec::threshold(1, 2.0, Direction::Above, 1.0);
  CHECK(r.raw(vec({0.0, 2.5})) == 1.0);
  CHECK(r.raw(vec({0.0, 1.5})) == 0.0);
  CHECK(r.scaled(vec({0.0, 2.5})) == 1.0);
}

TEST_CASE("constant reward and temperature scaling") {
  const RewardSpec c = RewardSpec::constant(0.4, 1.0, 1.0);
  CHECK(c.raw(vec({100.0, -3.0})) == doctest::Approx(0.4));
  CHECK(c.scaled(vec({0.0, 0.0})) == doctest::Approx(0.4));
  CHECK(c.lipschitz() == 0.0);
  const RewardSpec third = RewardSpec::constant(1.0 / 3.0, 0.5, 1.0);
  CHECK(third.scaled(vec({0.0})) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("logistic surrogate") {
  const RewardSpec r = RewardSpec::logistic(0, -7.0, Direction::Below, 4.0, 0.5);
  CHECK(r.raw(vec({-7.0, 0.0})) == doctest::Approx(0.5));
  CHECK(r.raw(vec({-20.0, 0.0})) == doctest::Approx(1.0));
  CHECK(r.raw(vec({10.0, 0.0})) < 1e-12);
  CHECK(r.lipschitz() == doctest::Approx(4.0 / (4.0 * 0.5)));
  // Finite-difference slope at the threshold matches the Lipschitz constant.
  const double h = 1e-6;
  const double slope = (r.scaled(vec({-7.0 - h, 0.0})) - r.scaled(vec({-7.0 + h, 0.0}))) / (2 * h);
  CHECK(slope == doctest::Approx(r.lipschitz()).epsilon(1e-6));
}

TEST_CASE("reward validation") {
  CHECK_THROWS_AS(RewardSpec::threshold(0, 0.0, Direction::Below, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(RewardSpec::threshold(0, 0.0, Direction::Below, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(RewardSpec::threshold(0, 0.0, Direction::Below, 1.0, 2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RewardSpec::logistic(0, 0.0, Direction::Below, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RewardSpec::constant(3.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("enum names round-trip") {
  for (auto k : {RewardKind::CoordinateThreshold, RewardKind::LogisticThreshold, RewardKind::Constant})
    CHECK(reward_kind_from_string(to_string(k)) == k);
  // Callbacks cannot come from a config file.
  CHECK_THROWS_AS(reward_kind_from_string(to_string(RewardKind::Callback)), std::invalid_argument);
  for (auto d : {Direction::Below, Direction::Above}) CHECK(direction_from_string(to_string(d)) == d);
  CHECK_THROWS_AS(direction_from_string("sideways"), std::invalid_argument);
}

TEST_CASE("callback reward") {
  const RewardSpec r = RewardSpec::callback([](const Vector& x) { return x(0) > 0 ? 0.5 : 0.0; }, 0.5, 1.0);
  CHECK(r.scaled(vec({1.0})) == doctest::Approx(1.0));
  CHECK(r.scaled(vec({-1.0})) == 0.0);
}
