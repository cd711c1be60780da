#include "lcb/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace lcb {

namespace {

std::atomic<std::uint64_t> g_saturations{0};

double clamp_exponent(double e) {
  if (e > kExponentClamp) {
    g_saturations.fetch_add(1, std::memory_order_relaxed);
    return kExponentClamp;
  }
  if (e < -kExponentClamp) {
    g_saturations.fetch_add(1, std::memory_order_relaxed);
    return -kExponentClamp;
  }
  return e;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t saturation_count() { return g_saturations.load(std::memory_order_relaxed); }
void reset_saturation_count() { g_saturations.store(0, std::memory_order_relaxed); }

double logsumexp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

double log_mean_exp(std::span<const double> values, double scale) {
  if (values.empty()) throw std::invalid_argument("log_mean_exp: empty input");
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, clamp_exponent(scale * v));
  double sum = 0.0;
  for (double v : values) {
    double e = scale * v;
    e = std::clamp(e, -kExponentClamp, kExponentClamp);
    sum += std::exp(e - hi);
  }
  return hi + std::log(sum) - std::log(static_cast<double>(values.size()));
}

void softmax(std::span<const double> values, double scale, std::span<double> weights) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, scale * v);
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    weights[i] = std::exp(scale * values[i] - hi);
    sum += weights[i];
  }
  for (double& w : weights) w /= sum;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_log_pdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * M_PI); }

double spectral_norm_symmetric(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double smallest_eigenvalue_symmetric(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

const QuadratureRule& gauss_hermite(int order) {
  static std::mutex mutex;
  static std::map<int, QuadratureRule> cache;
  if (order < 1) throw std::invalid_argument("gauss_hermite: order must be positive");
  std::lock_guard lock(mutex);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;

  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite recurrence.
  Matrix jacobi = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
  }
  return cache.emplace(order, std::move(rule)).first->second;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (c + 0x85157af5ULL));
  return h;
}

Vector Rng::normal_vector(Eigen::Index dim) {
  Vector z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z(i) = normal();
  return z;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace lcb
