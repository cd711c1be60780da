#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace lcb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Log-densities below this are treated as this value before any logsumexp.
inline constexpr double kLogDensityFloor = -745.0;
// Exponents fed to exp() inside MGF estimates are clamped to +-kExponentClamp.
inline constexpr double kExponentClamp = 700.0;

// Number of exponents clamped since the last reset. Process-wide; the
// acceptance runs require it to stay at zero.
std::uint64_t saturation_count();
void reset_saturation_count();

double logsumexp(std::span<const double> values);

// log((1/n) * sum_i exp(scale * values[i])), clamping each exponent at
// +-kExponentClamp and counting clamps.
double log_mean_exp(std::span<const double> values, double scale = 1.0);

// Softmax of scale * values, written into `weights` (same length).
void softmax(std::span<const double> values, double scale, std::span<double> weights);

double normal_cdf(double z);
double normal_log_pdf(double z);

// Largest eigenvalue of a symmetric matrix (operator norm for SPD input).
double spectral_norm_symmetric(const Matrix& m);
double smallest_eigenvalue_symmetric(const Matrix& m);

// Probabilists' Gauss-Hermite rule: sum_i w_i f(x_i) ~= E[f(Z)], Z ~ N(0,1).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const QuadratureRule& gauss_hermite(int order);

// Deterministic seed derivation (splitmix64 chain). Used to give every sample,
// particle and training round its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  // Uniform on (0, 1]; log() of the result is always finite.
  double uniform_open0() { return 1.0 - std::generate_canonical<double, 53>(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  Vector normal_vector(Eigen::Index dim);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Runs body(i) for i in [0, n). Work is split into contiguous chunks across
// hardware threads; callers write results by index so output order is fixed.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lcb
