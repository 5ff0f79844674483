#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "hc/quadratic.hpp"
#include "oracles.hpp"

using namespace hc;

namespace {

// Independent evaluation of phi_hat_1 by brute-force minimization of the
// weighted quadratic cost sum_j gamma_j alpha_j^2 a_j^2 / 2 subject to
// sum a = y: the minimizer is a_j proportional to 1 / (gamma_j alpha_j^2).
double direct_curvature(const QuadraticSpec& q) {
  const std::size_t n = q.alphas.size();
  double inv = 0.0, gamma = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j > 0) gamma *= q.betas[j - 1];
    inv += 1.0 / (gamma * q.alphas[j] * q.alphas[j]);
  }
  return 1.0 / inv;
}

}  // namespace

TEST_CASE("recursion on small hand-worked cases") {
  SUBCASE("two symmetric players") {
    QuadraticSpec q;
    q.alphas = {1.0, 1.0};
    q.betas = {1.0};
    const auto agg = quadratic_recursion(q);
    CHECK(agg.levels[0].g == std::vector<double>{0.5, 0.5});
    CHECK(agg.levels[0].lambda == std::vector<double>{1.0, 1.0});
    CHECK(agg.gamma == doctest::Approx(0.5));
    CHECK(agg.phi1_hat(2.0) == doctest::Approx(-1.0));
    CHECK(agg.phi1_slope(2.0) == doctest::Approx(-1.0));
  }
  SUBCASE("single player") {
    QuadraticSpec q;
    q.alphas = {1.7};
    const auto agg = quadratic_recursion(q);
    CHECK(agg.levels[0].g == std::vector<double>{1.0});
    CHECK(agg.gamma == doctest::Approx(1.7 * 1.7));
  }
  SUBCASE("three symmetric players") {
    QuadraticSpec q;
    q.alphas = {1.0, 1.0, 1.0};
    q.betas = {1.0, 1.0};
    const auto agg = quadratic_recursion(q);
    CHECK(agg.levels[1].g[0] == doctest::Approx(0.5));
    CHECK(agg.levels[1].curvature == doctest::Approx(0.5));
    CHECK(agg.levels[0].inner_slope == doctest::Approx(1.0 / 3.0));
    for (double g : agg.levels[0].g) CHECK(g == doctest::Approx(1.0 / 3.0));
    CHECK(agg.gamma == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("validation") {
    QuadraticSpec q;
    q.alphas = {1.0, 1.0};
    q.betas = {};
    CHECK_THROWS_AS(quadratic_recursion(q), Error);
    q.betas = {-1.0};
    CHECK_THROWS_AS(quadratic_recursion(q), Error);
    q.betas = {1.0};
    q.alphas = {1.0, 0.0};
    CHECK_THROWS_AS(quadratic_recursion(q), Error);
  }
}

TEST_CASE("hamiltonian coefficient") {
  auto h = quadratic_hamiltonian_coefficient(0.5, 0.0, -2.0, 1.0);
  CHECK(h.coefficient == doctest::Approx(-0.25));
  CHECK(h.s_star == doctest::Approx(2.0));
  CHECK(h.value == doctest::Approx(1.0));
  CHECK_FALSE(h.unbounded);

  h = quadratic_hamiltonian_coefficient(0.5, 0.0, 0.0, 1.0);
  CHECK(h.unbounded);

  h = quadratic_hamiltonian_coefficient(1.0, 0.5, -1.0, 1.0);
  CHECK(h.coefficient == doctest::Approx(-0.25));
  CHECK(h.s_star == doctest::Approx(2.0));

  // Closed form against a brute-force maximization of c s^2 + s.
  for (double vww : {-3.0, -1.0, -0.2}) {
    const auto q = quadratic_hamiltonian_coefficient(0.7, 0.1, vww, 1.3);
    const double c = q.coefficient;
    const double s = oracle::grid_argmax([c](double x) { return c * x * x + x; }, -50.0, 50.0, 2000001);
    CHECK(std::abs(s - q.s_star) <= 1e-3);
  }
}

TEST_CASE("random specs: structure and independent curvature") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> A(0.5, 2.0), B(0.05, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    QuadraticSpec q;
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 5);
    for (std::size_t k = 0; k < n; ++k) q.alphas.push_back(A(rng));
    for (std::size_t k = 0; k + 1 < n; ++k) q.betas.push_back(B(rng));
    const auto agg = quadratic_recursion(q);
    for (const auto& L : agg.levels) {
      CHECK(std::abs(std::accumulate(L.g.begin(), L.g.end(), 0.0) - 1.0) <= 1e-14);
      for (double l : L.lambda) CHECK(l > 0.0);
    }
    CHECK(agg.gamma > 0.0);
    CHECK(agg.gamma == doctest::Approx(direct_curvature(q)).epsilon(1e-12));

    // Raising any alpha never lowers gamma.
    for (std::size_t k = 0; k < n; ++k) {
      auto up = q;
      up.alphas[k] *= 1.1;
      CHECK(quadratic_recursion(up).gamma >= agg.gamma * (1.0 - 1e-14));
    }
  }
}

TEST_CASE("zero payment slope isolates the first player") {
  QuadraticSpec q;
  q.alphas = {1.5, 1.0};
  q.betas = {0.0};
  const auto agg = quadratic_recursion(q);
  CHECK(agg.levels[0].inner_slope == 0.0);
  CHECK(agg.levels[0].g == std::vector<double>{0.0, 1.0});
  CHECK(agg.gamma == 0.0);
}
