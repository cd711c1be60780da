#include "lcb/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace lcb {

Mlp::Mlp(int input_dim, std::vector<int> hidden, std::uint64_t seed) : input_dim_(input_dim), hidden_(std::move(hidden)) {
  if (input_dim_ < 1) throw std::invalid_argument("mlp: input dimension must be positive");
  std::vector<int> widths{input_dim_};
  for (int w : hidden_) {
    if (w < 1) throw std::invalid_argument("mlp: hidden widths must be positive");
    widths.push_back(w);
  }
  widths.push_back(1);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double scale = std::sqrt(1.0 / widths[l]);
    Matrix w(widths[l + 1], widths[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(Vector::Zero(widths[l + 1]));
  }
}

double Mlp::forward(const Vector& x) const {
  Vector h = x;
  const std::size_t L = weights_.size();
  for (std::size_t l = 0; l < L; ++l) {
    Vector z = weights_[l] * h + biases_[l];
    h = l + 1 < L ? Vector(z.array().tanh()) : z;
  }
  return h(0);
}

Vector Mlp::forward(const Matrix& X) const {
  Matrix h = X;
  const std::size_t L = weights_.size();
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = (weights_[l] * h).colwise() + biases_[l];
    if (l + 1 < L) z = z.array().tanh();
    h = std::move(z);
  }
  return h.row(0).transpose();
}

Vector Mlp::forward(const Matrix& X, Tape& tape) const {
  tape.activations.clear();
  tape.activations.push_back(X);
  const std::size_t L = weights_.size();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    Matrix z = (weights_[l] * tape.activations.back()).colwise() + biases_[l];
    tape.activations.push_back(z.array().tanh());
  }
  Matrix out = (weights_.back() * tape.activations.back()).colwise() + biases_.back();
  return out.row(0).transpose();
}

Vector Mlp::backward(const Tape& tape, const Vector& dout) const {
  const std::size_t L = weights_.size();
  std::vector<Matrix> gw(L);
  std::vector<Vector> gb(L);
  Matrix delta = dout.transpose();  // 1 x n
  for (std::size_t l = L; l-- > 0;) {
    const Matrix& in = tape.activations[l];
    gw[l] = delta * in.transpose();
    gb[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = weights_[l].transpose() * delta;
      delta = back.array() * (1.0 - in.array().square());
    }
  }
  Vector g(parameter_count());
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < L; ++l) {
    g.segment(pos, gw[l].size()) = Eigen::Map<const Vector>(gw[l].data(), gw[l].size());
    pos += gw[l].size();
    g.segment(pos, gb[l].size()) = gb[l];
    pos += gb[l].size();
  }
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Vector Mlp::parameters() const {
  Vector p(parameter_count());
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    p.segment(pos, weights_[l].size()) = Eigen::Map<const Vector>(weights_[l].data(), weights_[l].size());
    pos += weights_[l].size();
    p.segment(pos, biases_[l].size()) = biases_[l];
    pos += biases_[l].size();
  }
  return p;
}

void Mlp::set_parameters(const Vector& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count()) throw std::invalid_argument("mlp: parameter size mismatch");
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::Map<Vector>(weights_[l].data(), weights_[l].size()) = p.segment(pos, weights_[l].size());
    pos += weights_[l].size();
    biases_[l] = p.segment(pos, biases_[l].size());
    pos += biases_[l].size();
  }
}

nlohmann::json Mlp::to_json() const {
  const Vector p = parameters();
  return {{"input_dim", input_dim_}, {"hidden", hidden_}, {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp m(j.at("input_dim").get<int>(), j.at("hidden").get<std::vector<int>>(), 0);
  const auto p = j.at("parameters").get<std::vector<double>>();
  m.set_parameters(Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size())));
  return m;
}

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {
  if (!(cfg_.learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
}

void Adam::step(Vector& params, const Vector& grad) {
  ++steps_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  params.array() -= cfg_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
}

}  // namespace lcb
