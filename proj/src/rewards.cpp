#include "lcb/rewards.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lcb {

std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::CoordinateThreshold: return "coordinate_threshold";
    case RewardKind::LogisticThreshold: return "logistic_threshold";
    case RewardKind::Constant: return "constant";
    case RewardKind::Callback: return "callback";
  }
  return "unknown";
}

std::string to_string(Direction dir) { return dir == Direction::Below ? "below" : "above"; }

RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "coordinate_threshold") return RewardKind::CoordinateThreshold;
  if (s == "logistic_threshold") return RewardKind::LogisticThreshold;
  if (s == "constant") return RewardKind::Constant;
  throw std::invalid_argument("unknown reward kind '" + s + "'");
}

Direction direction_from_string(const std::string& s) {
  if (s == "below") return Direction::Below;
  if (s == "above") return Direction::Above;
  throw std::invalid_argument("unknown threshold direction '" + s + "'");
}

RewardSpec RewardSpec::threshold(int coordinate, double theta, Direction dir, double temperature, double height,
                                 double raw_bound) {
  RewardSpec r;
  r.kind_ = RewardKind::CoordinateThreshold;
  r.coordinate_ = coordinate;
  r.theta_ = theta;
  r.direction_ = dir;
  r.height_ = height;
  r.temperature_ = temperature;
  r.raw_bound_ = raw_bound;
  r.validate();
  return r;
}

RewardSpec RewardSpec::logistic(int coordinate, double theta, Direction dir, double slope, double temperature,
                                double height, double raw_bound) {
  RewardSpec r;
  r.kind_ = RewardKind::LogisticThreshold;
  r.coordinate_ = coordinate;
  r.theta_ = theta;
  r.direction_ = dir;
  r.slope_ = slope;
  r.height_ = height;
  r.temperature_ = temperature;
  r.raw_bound_ = raw_bound;
  if (!(slope > 0.0)) throw std::invalid_argument("reward: logistic slope must be positive");
  r.validate();
  return r;
}

RewardSpec RewardSpec::constant(double value, double temperature, double raw_bound) {
  RewardSpec r;
  r.kind_ = RewardKind::Constant;
  r.constant_ = value;
  r.temperature_ = temperature;
  r.raw_bound_ = raw_bound;
  r.validate();
  return r;
}

RewardSpec RewardSpec::callback(std::function<double(const Vector&)> fn, double temperature, double raw_bound) {
  if (!fn) throw std::invalid_argument("reward: empty callback");
  RewardSpec r;
  r.kind_ = RewardKind::Callback;
  r.callback_ = std::move(fn);
  r.temperature_ = temperature;
  r.raw_bound_ = raw_bound;
  r.validate();
  return r;
}

void RewardSpec::validate() const {
  if (!(temperature_ > 0.0)) throw std::invalid_argument("reward: temperature must be positive");
  if (!(raw_bound_ > 0.0)) throw std::invalid_argument("reward: raw bound must be positive");
  if (coordinate_ < 0) throw std::invalid_argument("reward: coordinate must be non-negative");
  switch (kind_) {
    case RewardKind::CoordinateThreshold:
    case RewardKind::LogisticThreshold:
      if (std::abs(height_) > raw_bound_) throw std::invalid_argument("reward: height exceeds raw bound");
      break;
    case RewardKind::Constant:
      if (std::abs(constant_) > raw_bound_) throw std::invalid_argument("reward: constant exceeds raw bound");
      break;
    case RewardKind::Callback:
      break;
  }
}

double RewardSpec::raw_of_coordinate(double xj) const {
  const double signed_gap = direction_ == Direction::Below ? theta_ - xj : xj - theta_;
  switch (kind_) {
    case RewardKind::CoordinateThreshold:
      return signed_gap > 0.0 ? height_ : 0.0;
    case RewardKind::LogisticThreshold:
      return height_ / (1.0 + std::exp(-slope_ * signed_gap));
    default:
      throw std::logic_error("reward: raw_of_coordinate on a non-coordinate reward");
  }
}

double RewardSpec::raw(const Vector& x) const {
  switch (kind_) {
    case RewardKind::CoordinateThreshold:
    case RewardKind::LogisticThreshold:
      return raw_of_coordinate(x(coordinate_));
    case RewardKind::Constant:
      return constant_;
    case RewardKind::Callback: {
      const double v = callback_(x);
      if (std::abs(v) > raw_bound_) throw std::runtime_error("reward: callback value exceeds raw bound");
      return v;
    }
  }
  return 0.0;
}

double RewardSpec::max_raw() const {
  switch (kind_) {
    case RewardKind::CoordinateThreshold:
    case RewardKind::LogisticThreshold:
      return std::max(height_, 0.0);
    case RewardKind::Constant:
      return constant_;
    case RewardKind::Callback:
      return raw_bound_;
  }
  return raw_bound_;
}

double RewardSpec::lipschitz() const {
  switch (kind_) {
    case RewardKind::Constant:
      return 0.0;
    case RewardKind::LogisticThreshold:
      return std::abs(height_) * slope_ / (4.0 * temperature_);
    default:
      return std::numeric_limits<double>::infinity();
  }
}

}  // namespace lcb
