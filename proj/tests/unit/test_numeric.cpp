#include "lcb/numeric.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace lcb;

TEST_CASE("logsumexp is stable for large and small inputs") {
  std::vector<double> big{1000.0, 1000.0};
  CHECK(logsumexp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  std::vector<double> small{-1000.0, -1000.0, -1000.0};
  CHECK(logsumexp(small) == doctest::Approx(-1000.0 + std::log(3.0)).epsilon(1e-15));
  std::vector<double> mixed{0.0, std::log(2.0), std::log(3.0)};
  CHECK(logsumexp(mixed) == doctest::Approx(std::log(6.0)));
}

TEST_CASE("log_mean_exp matches direct evaluation and counts clamps") {
  reset_saturation_count();
  std::vector<double> s{0.1, -0.3, 0.7, 1.2};
  double direct = 0.0;
  for (double x : s) direct += std::exp(2.5 * x);
  CHECK(log_mean_exp(s, 2.5) == doctest::Approx(std::log(direct / 4.0)).epsilon(1e-14));
  CHECK(saturation_count() == 0);

  std::vector<double> huge{800.0};
  CHECK(log_mean_exp(huge, 1.0) == doctest::Approx(kExponentClamp));
  CHECK(saturation_count() == 1);
  reset_saturation_count();
}

TEST_CASE("softmax weights sum to one") {
  std::vector<double> s{3.0, -1.0, 0.5, 0.5};
  std::vector<double> w(s.size());
  softmax(s, -2.0, w);
  double total = 0.0;
  for (double x : w) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w[1] > w[2]);
  CHECK(w[2] == doctest::Approx(w[3]));
}

TEST_CASE("normal cdf reference values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(-2.0) == doctest::Approx(0.022750131948179209).epsilon(1e-12));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_log_pdf(0.0) == doctest::Approx(-0.5 * std::log(2.0 * M_PI)));
}

TEST_CASE("Gauss-Hermite rule integrates Gaussian moments exactly") {
  const auto& rule = gauss_hermite(64);
  REQUIRE(rule.nodes.size() == 64);
  double m0 = 0.0, m2 = 0.0, m4 = 0.0, m6 = 0.0, m3 = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i], w = rule.weights[i];
    m0 += w;
    m2 += w * x * x;
    m3 += w * x * x * x;
    m4 += w * std::pow(x, 4);
    m6 += w * std::pow(x, 6);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(m3) < 1e-12);
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-11));
  CHECK(m6 == doctest::Approx(15.0).epsilon(1e-10));
  // E[Phi(Z)] = 1/2
  double phi = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) phi += rule.weights[i] * normal_cdf(rule.nodes[i]);
  CHECK(phi == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("derived seeds are distinct and deterministic") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(42, 7, 1) == derive_seed(42, 7, 1));
  CHECK(derive_seed(42, 7, 1) != derive_seed(42, 1, 7));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("symmetric eigen helpers") {
  Matrix m(2, 2);
  m << 2.0, 1.0, 1.0, 2.0;
  CHECK(spectral_norm_symmetric(m) == doctest::Approx(3.0));
  CHECK(smallest_eigenvalue_symmetric(m) == doctest::Approx(1.0));
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("Rng uniform_open0 never returns zero") {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform_open0();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
}
