#pragma once

#include "lcb/numeric.hpp"

#include <functional>
#include <string>

namespace lcb {

enum class RewardKind { CoordinateThreshold, LogisticThreshold, Constant, Callback };
enum class Direction { Below, Above };

std::string to_string(RewardKind kind);
std::string to_string(Direction dir);
RewardKind reward_kind_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);

// Bounded reward r0 with temperature alpha. The sampler works with the scaled
// reward r = r0 / alpha, bounded by B = B0 / alpha.
class RewardSpec {
 public:
  // r0(x) = height * 1{x_j < theta} (or > theta for Direction::Above).
  static RewardSpec threshold(int coordinate, double theta, Direction dir, double temperature,
                              double height = 1.0, double raw_bound = 1.0);
  // Smooth surrogate of the threshold: height * sigmoid(slope * (theta - x_j)).
  static RewardSpec logistic(int coordinate, double theta, Direction dir, double slope, double temperature,
                             double height = 1.0, double raw_bound = 1.0);
  static RewardSpec constant(double value, double temperature, double raw_bound);
  // Opaque reward; only the Monte Carlo value path accepts it.
  static RewardSpec callback(std::function<double(const Vector&)> fn, double temperature, double raw_bound);

  RewardKind kind() const { return kind_; }
  int coordinate() const { return coordinate_; }
  double threshold_value() const { return theta_; }
  Direction direction() const { return direction_; }
  double height() const { return height_; }
  double slope() const { return slope_; }
  double constant_value() const { return constant_; }
  double raw_bound() const { return raw_bound_; }
  double temperature() const { return temperature_; }
  double effective_bound() const { return raw_bound_ / temperature_; }

  double raw(const Vector& x) const;
  double scaled(const Vector& x) const { return raw(x) / temperature_; }
  // Raw reward as a function of the single coordinate it reads.
  double raw_of_coordinate(double xj) const;

  // Largest attainable raw reward (the "reward region" level).
  double max_raw() const;
  // Lipschitz constant of the scaled reward; +inf for the indicator.
  double lipschitz() const;

 private:
  RewardSpec() = default;
  void validate() const;

  RewardKind kind_ = RewardKind::Constant;
  int coordinate_ = 0;
  double theta_ = 0.0;
  Direction direction_ = Direction::Below;
  double height_ = 1.0;
  double slope_ = 1.0;
  double constant_ = 0.0;
  double raw_bound_ = 1.0;
  double temperature_ = 1.0;
  std::function<double(const Vector&)> callback_;
};

}  // namespace lcb
