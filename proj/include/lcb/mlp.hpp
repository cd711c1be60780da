#pragma once

#include "lcb/numeric.hpp"

#include <json.hpp>

#include <vector>

namespace lcb {

// Feed-forward map R^d -> R with tanh hidden layers and a linear output.
// Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input_dim, std::vector<int> hidden, std::uint64_t seed);

  struct Tape {
    std::vector<Matrix> activations;  // input, then each hidden layer
  };

  int input_dim() const { return input_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }
  bool empty() const { return weights_.empty(); }

  double forward(const Vector& x) const;
  Vector forward(const Matrix& X) const;
  Vector forward(const Matrix& X, Tape& tape) const;
  // Gradient of sum_i dout_i * f(x_i) with respect to the flat parameter vector.
  Vector backward(const Tape& tape, const Vector& dout) const;

  std::size_t parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& p);
  void set_output_bias(double b) { biases_.back()(0) = b; }
  double output_bias() const { return biases_.back()(0); }
  // Makes the network start as the constant output_bias().
  void zero_output_weights() { weights_.back().setZero(); }

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  int input_dim_ = 0;
  std::vector<int> hidden_;
  std::vector<Matrix> weights_;  // layer l maps width[l] -> width[l+1]
  std::vector<Vector> biases_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg = {});
  void step(Vector& params, const Vector& grad);
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

 private:
  AdamConfig cfg_;
  Vector m_;
  Vector v_;
  long steps_ = 0;
};

}  // namespace lcb
