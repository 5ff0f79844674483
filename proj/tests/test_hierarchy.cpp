#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "hc/hierarchy.hpp"
#include "hc/quadratic.hpp"
#include "oracles.hpp"

using namespace hc;

namespace {

HierarchySpec quadratic_spec(std::vector<double> alphas, std::vector<double> betas, Interval dom = {-2.0, 2.0}) {
  QuadraticSpec q;
  q.alphas = std::move(alphas);
  q.betas = std::move(betas);
  return to_hierarchy(q, dom, 1.0, 1.0);
}

}  // namespace

TEST_CASE("gamma coefficients") {
  SUBCASE("unit slopes") {
    const std::vector<double> b{1.0, 1.0};
    const auto g = gamma_coefficients(b, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i; j < 3; ++j) CHECK(g(i, j) == 1.0);
  }
  SUBCASE("single product") {
    const std::vector<double> b{0.5};
    const auto g = gamma_coefficients(b, 2);
    CHECK(g(0, 0) == 1.0);
    CHECK(g(0, 1) == 0.5);
    CHECK(g(1, 1) == 1.0);
  }
  SUBCASE("two factors") {
    const std::vector<double> b{2.0, 3.0};
    const auto g = gamma_coefficients(b, 3);
    CHECK(g(0, 2) == 6.0);
    CHECK(g(1, 2) == 3.0);
  }
  SUBCASE("negative slope rejected") {
    const std::vector<double> b{1.0, -0.1};
    CHECK_THROWS_AS(gamma_coefficients(b, 3), Error);
  }
}

TEST_CASE("aggregate cost") {
  SUBCASE("two quadratic players") {
    const std::vector<double> b{1.0};
    const std::vector<Utility> u{Utility::quadratic(1.0), Utility::quadratic(1.0)};
    const std::vector<double> a{1.0, 1.0};
    CHECK(aggregate_cost(0, gamma_coefficients(b, 2), u, a) == doctest::Approx(-1.0));
    const std::vector<double> zero{0.0, 0.0};
    CHECK(aggregate_cost(0, gamma_coefficients(b, 2), u, zero) == 0.0);
  }
  SUBCASE("three players, row (1, 2, 6)") {
    const std::vector<double> b{2.0, 3.0};
    const std::vector<Utility> u(3, Utility::power(1.0, 2.0));
    const std::vector<double> a{1.0, 1.0, 1.0};
    CHECK(aggregate_cost(0, gamma_coefficients(b, 3), u, a) == doctest::Approx(-9.0));
  }
  SUBCASE("dimension mismatch") {
    const std::vector<double> b{1.0};
    const std::vector<Utility> u(2, Utility::quadratic(1.0));
    const std::vector<double> a{1.0};
    CHECK_THROWS_AS(aggregate_cost(0, gamma_coefficients(b, 2), u, a), Error);
  }
  SUBCASE("recursion consistency on random inputs") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-2.0, 2.0), B(0.0, 1.5), A(0.5, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + trial % 5;
      std::vector<double> betas(n - 1), a(n);
      std::vector<Utility> u;
      for (auto& x : betas) x = B(rng);
      for (auto& x : a) x = U(rng);
      for (std::size_t k = 0; k < n; ++k)
        u.push_back(k % 2 ? Utility::quadratic(A(rng)) : Utility::power(A(rng), 1.5 + 0.25 * static_cast<double>(k)));
      const auto g = gamma_coefficients(betas, n);
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const std::span<const double> tail(a.data() + k, n - k);
        const double mu = aggregate_cost(k, g, u, tail);
        const double rec = u[k](a[k]) + betas[k] * aggregate_cost(k + 1, g, u, tail.subspan(1));
        CHECK(std::abs(mu - rec) <= 1e-10 * (1.0 + std::abs(mu)));
      }
    }
  }
}

TEST_CASE("spec validation") {
  auto spec = quadratic_spec({1.0, 1.0}, {1.0});
  CHECK_NOTHROW(spec.validate());
  auto bad = spec;
  bad.sigma = -1.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("hierarchy.sigma"), Error);
  bad = spec;
  bad.players[0].beta = -0.5;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("players[0].beta"), Error);
  bad = spec;
  bad.players[1].effort_domain = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), Error);

  Warnings ws;
  auto wells = spec;
  wells.players[1].utility = Utility::polynomial({-1.0, 0.0, 2.0, 0.0, -1.0});
  wells.validate(&ws);
  CHECK(has_warning(ws, "nonconcave_utility"));
}

TEST_CASE("build_aggregate: single quadratic player") {
  auto spec = quadratic_spec({1.0}, {});
  spec.players[0].reservation = 0.3;
  const auto agg = build_aggregate(spec, {257, 33});
  CHECK(agg.w_star[0] == 0.3);
  const auto& L = agg.levels[0];
  for (std::size_t i = 0; i < L.envelope.size(); ++i) {
    const double y = L.envelope.nodes[i];
    CHECK(L.psi.valid(i));
    CHECK(L.psi.point(i)[0] == y);
    CHECK(L.envelope.values[i] == doctest::Approx(-0.5 * y * y).epsilon(1e-14).scale(1.0));
  }
}

TEST_CASE("build_aggregate: symmetric two-player quadratic") {
  const auto spec = quadratic_spec({1.0, 1.0}, {1.0});
  const auto agg = build_aggregate(spec, {401, 33});
  CHECK(agg.w_star[0] == 0.0);
  CHECK(agg.w_star[1] == 0.0);
  const auto& L = agg.levels[0];
  for (std::size_t i = 0; i < L.envelope.size(); ++i) {
    if (L.truncated[i]) continue;
    const double y = L.envelope.nodes[i];
    REQUIRE(L.psi.valid(i));
    CHECK(std::abs(L.psi.point(i)[0] - 0.5 * y) <= 1e-6);
    CHECK(std::abs(L.psi.point(i)[1] - 0.5 * y) <= 1e-6);
    CHECK(std::abs(L.envelope.values[i] + 0.25 * y * y) <= 1e-6);
  }
}

TEST_CASE("build_aggregate: non-concave downstream player") {
  auto spec = quadratic_spec({1.0, 1.0}, {1.0}, {-1.5, 1.5});
  spec.players[1].utility = Utility::polynomial({-1.0, 0.0, 2.0, 0.0, -1.0});
  const auto agg = build_aggregate(spec, {301, 33});
  CHECK(has_warning(agg.warnings, "nonconcave_utility"));

  const auto& L2 = agg.levels[1];
  std::vector<double> raw;
  for (double y : L2.envelope.nodes) raw.push_back(-(y * y - 1.0) * (y * y - 1.0));
  const auto hull = oracle::all_chords_hull(L2.envelope.nodes, raw);
  for (std::size_t i = 0; i < L2.envelope.size(); ++i) {
    const double y = L2.envelope.nodes[i];
    CHECK(std::abs(L2.envelope.values[i] - hull[i]) <= 1e-10);
    if (std::abs(y) < 1.0 - 1e-9) CHECK_FALSE(L2.psi.valid(i));
    if (std::abs(y) > 1.0 + 1e-9) CHECK(L2.psi.valid(i));
  }
  for (const auto& L : agg.levels)
    for (std::size_t i = 0; i < L.psi.size(); ++i) {
      if (!L.psi.valid(i)) continue;
      const auto p = L.psi.point(i);
      CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - L.psi.y_nodes()[i]) <= 1e-12);
    }
  // Player 1 never recommends a downstream effort inside the gap.
  const auto& L1 = agg.levels[0];
  for (std::size_t i = 0; i < L1.psi.size(); ++i)
    if (L1.psi.valid(i)) CHECK(std::abs(L1.psi.point(i)[1]) >= 1.0 - 1e-6);
}

TEST_CASE("level properties on strictly concave specs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> A(0.5, 2.0), B(0.0, 1.5);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 2);
    HierarchySpec spec;
    for (std::size_t k = 0; k < n; ++k) {
      PlayerSpec p;
      p.utility = k % 2 ? Utility::quadratic(A(rng)) : Utility::power(A(rng), 1.5);
      p.beta = B(rng);
      p.effort_domain = {-1.0, 1.0};
      spec.players.push_back(p);
    }
    const auto agg = build_aggregate(spec, {201, 33});
    for (std::size_t k = 0; k < n; ++k) {
      const auto& L = agg.levels[k];
      // y -> mu_k(psi_k(y)) has non-increasing slopes over the valid nodes.
      std::vector<double> ys, vals;
      for (std::size_t i = 0; i < L.psi.size(); ++i) {
        if (!L.psi.valid(i)) continue;
        ys.push_back(L.psi.y_nodes()[i]);
        vals.push_back(agg.mu(k, L.psi.point(i)));
      }
      for (std::size_t i = 2; i < ys.size(); ++i) {
        const double s0 = (vals[i - 1] - vals[i - 2]) / (ys[i - 1] - ys[i - 2]);
        const double s1 = (vals[i] - vals[i - 1]) / (ys[i] - ys[i - 1]);
        CHECK(s1 <= s0 + 1e-6);
      }
      // Envelope dominance over downstream-feasible points.
      if (k + 1 < n) {
        const auto& next = agg.levels[k + 1].psi;
        std::vector<double> a(n - k);
        for (std::size_t j = 0; j < next.size(); j += 7) {
          if (!next.valid(j)) continue;
          const auto tail = next.point(j);
          std::copy(tail.begin(), tail.end(), a.begin() + 1);
          for (std::size_t i = 0; i < L.envelope.size(); i += 5) {
            a[0] = L.envelope.nodes[i] - next.y_nodes()[j];
            if (std::abs(a[0]) > 1.0) continue;
            CHECK(L.envelope.values[i] >= agg.mu(k, a) - 1e-9);
          }
        }
      }
    }
  }
}
