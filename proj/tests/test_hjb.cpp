#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "hc/hjb.hpp"
#include "hc/quadratic.hpp"
#include "hc/verify.hpp"
#include "oracles.hpp"

using namespace hc;

namespace {

AggregateContract quadratic_agg(std::size_t n, Interval dom = {-0.5, 2.5}, double sigma = 1.0, double T = 1.0,
                                std::size_t y_nodes = 513) {
  QuadraticSpec q;
  q.alphas.assign(n, 1.0);
  q.betas.assign(n - 1, 1.0);
  return build_aggregate(to_hierarchy(q, dom, sigma, T), {y_nodes, 33});
}

HjbGrid small_grid(std::size_t nw = 101) {
  HjbGrid g;
  g.w_min = -4.0;
  g.w_max = 6.0;
  g.w_nodes = nw;
  g.time_layers = 50;
  return g;
}

}  // namespace

TEST_CASE("pointwise hamiltonian") {
  SUBCASE("matches the quadratic closed form") {
    // Symmetric pair: gamma = 1/2, s* = 2, H = 1. At a node of the sampled
    // envelope y may sit anywhere in a slope interval of width gamma * h, so
    // the discrete value is within O(h) of the closed form.
    const auto agg = quadratic_agg(2, {-2.0, 4.0}, 1.0, 1.0, 2401);
    const double h_y = 12.0 / 2400.0;
    Warnings ws;
    const auto h = hamiltonian(agg, 0.0, -2.0, 1.0, std::nullopt, &ws);
    const auto q = quadratic_hamiltonian_coefficient(0.5, 0.0, -2.0, 1.0);
    CHECK(std::abs(h.s_star - q.s_star) <= 2.0 * h_y);
    CHECK(h.value >= q.value - 1e-9);
    CHECK(h.value <= q.value + h_y * q.s_star);
    CHECK(std::abs(h.y_star + 0.5 * h.s_star) <= 0.5 * h_y);
    CHECK(supergradient(agg.phi1_hat(), h.s_star).contains(h.y_star));
    CHECK_FALSE(has_warning(ws, "control_truncation"));
  }
  SUBCASE("flat value function pushes effort to the bound") {
    const auto agg = quadratic_agg(1);
    Warnings ws;
    const auto h = hamiltonian(agg, 0.0, 0.0, 1.0, std::nullopt, &ws);
    CHECK(h.s_star == doctest::Approx(2.5));
    CHECK(h.value == doctest::Approx(2.5));
    CHECK(has_warning(ws, "control_truncation"));
  }
  SUBCASE("coarse-to-fine search agrees with exhaustive on concave problems") {
    const auto agg = quadratic_agg(2);
    const auto table = build_control_table(agg);
    for (double vw : {-1.0, -0.3, 0.0, 0.4})
      for (double vww : {-2.0, -0.5, -0.1}) {
        const auto a = hamiltonian(table, vw, vw, vww, 1.0, ControlSearch::exhaustive);
        const auto b = hamiltonian(table, vw, vw, vww, 1.0, ControlSearch::coarse_to_fine, 16);
        CHECK(a.value == b.value);
      }
  }
  SUBCASE("sensitivity choice") {
    CHECK(best_sensitivity(-1.0, 2.0, -1.0) == 0.0);
    CHECK(best_sensitivity(0.5, 2.0, -1.0) == 0.5);
    CHECK(best_sensitivity(-3.0, -1.0, -1.0) == -1.0);
    CHECK(best_sensitivity(-1.0, 2.0, 1.0) == 2.0);
    CHECK(best_sensitivity(-3.0, 2.0, 1.0) == -3.0);
  }
}

TEST_CASE("stencil weights are non-negative under the CFL step") {
  const auto agg = quadratic_agg(2);
  const auto table = build_control_table(agg);
  const double dw = 0.05, sigma = 1.0;
  const double rate = sigma * sigma * std::pow(table.y_abs_max(), 2) / (dw * dw) + table.drift_abs_max() / dw;
  const double dt = 0.9 / rate;
  for (std::size_t j = 0; j < table.size(); ++j)
    for (double y : {table.y_lo[j], table.y_hi[j]}) {
      const auto w = stencil_weights(table.drift[j], y, sigma, dw, dt);
      CHECK(w.left >= 0.0);
      CHECK(w.right >= 0.0);
      CHECK(w.center >= 0.0);
      CHECK(w.left + w.center + w.right == doctest::Approx(1.0));
    }
  // Twice the CFL step breaks monotonicity somewhere.
  bool negative = false;
  for (std::size_t j = 0; j < table.size(); ++j)
    negative = negative || stencil_weights(table.drift[j], table.y_hi[j], sigma, dw, 2.2 / rate).center < 0.0 ||
               stencil_weights(table.drift[j], table.y_lo[j], sigma, dw, 2.2 / rate).center < 0.0;
  CHECK(negative);
}

TEST_CASE("zero horizon returns the terminal utility") {
  auto agg = quadratic_agg(1, {-0.5, 2.5}, 1.0, 0.0);
  const auto vf = solve_hjb(agg, small_grid());
  REQUIRE(vf.nt() == 1);
  for (std::size_t i = 0; i < vf.nw(); ++i) CHECK(vf.v[i] == agg.spec.terminal(vf.w_nodes[i]));
}

TEST_CASE("solve_hjb on the quadratic pair") {
  const auto agg = quadratic_agg(2);
  const auto vf = solve_hjb(agg, small_grid());
  const std::size_t last = vf.nt() - 1;
  for (std::size_t i = 0; i < vf.nw(); ++i) CHECK(vf.v[vf.at(last, i)] == agg.spec.terminal(vf.w_nodes[i]));
  for (double x : vf.v) CHECK(std::isfinite(x));

  const auto& phi = agg.phi1_hat();
  const auto& psi = agg.psi1();
  for (std::size_t k = 0; k < vf.v.size(); ++k) {
    const double s = vf.s_star[k];
    CHECK(std::isfinite(s));
    CHECK(psi.domain().contains(s));
    CHECK(supergradient(phi, s).contains(vf.y_star[k], 1e-8));
  }
  for (std::size_t i = 0; i < vf.nw(); ++i) CHECK(vf.s_star[vf.at(last, i)] == vf.s_star[vf.at(last - 1, i)]);

  const auto pol = extract_policy(vf, agg);
  for (double w : {-1.0, 0.0, 0.37, 2.0})
    for (double t : {0.0, 0.33, 1.0}) {
      const auto p = pol(w, t);
      CHECK_FALSE(p.clamped);
      CHECK(std::abs(std::accumulate(p.a.begin(), p.a.end(), 0.0) - p.s) <= 1e-12);
      CHECK(p.a[0] == doctest::Approx(p.s / 2).epsilon(1e-6).scale(1.0));
      CHECK(p.a[1] == doctest::Approx(p.s / 2).epsilon(1e-6).scale(1.0));
      CHECK(supergradient(phi, p.s).contains(p.y, 1e-12));
    }
  CHECK(pol(100.0, 0.5).clamped);
  CHECK(pol(0.0, -1.0).clamped);
}

TEST_CASE("enlarging the control set never lowers the value") {
  const auto agg = quadratic_agg(1);
  auto g = small_grid();
  g.search = ControlSearch::exhaustive;
  g.control_domain = Interval{0.0, 1.0};
  const auto narrow = solve_hjb(agg, g);
  g.control_domain = Interval{-0.5, 2.5};
  const auto wide = solve_hjb(agg, g);
  double worst = 0.0;
  std::size_t at = 0;
  for (std::size_t k = 0; k < wide.v.size(); ++k)
    if (narrow.v[k] - wide.v[k] > worst) {
      worst = narrow.v[k] - wide.v[k];
      at = k;
    }
  CHECK_MESSAGE(worst <= 1e-10, "worst ", worst, " at w=", wide.w_nodes[at % wide.nw()], " layer ", at / wide.nw());
  CHECK(has_warning(narrow.warnings, "control_truncation"));
}

TEST_CASE("small-noise limit matches the constant-control oracle") {
  // With q0 linear the value gradient is constant, so the optimum is a
  // constant control: v(w, 0) = -c w + T max_s [s + c mu_1(psi_1(s))].
  QuadraticSpec q;
  q.alphas = {1.0};
  auto spec = to_hierarchy(q, {-0.5, 2.5}, 1e-3, 1.0);
  const double c = 0.8;
  spec.terminal = TerminalUtility::linear(c);
  const auto agg = build_aggregate(spec, {513, 33});
  auto g = small_grid(201);
  const auto vf = solve_hjb(agg, g);
  const double best = oracle::grid_argmax([&](double s) { return s - c * 0.5 * s * s; }, -0.5, 2.5);
  const double expect = -c * 0.5 + (best - c * 0.5 * best * best);
  CHECK(vf.value(0.5, 0.0) == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("self-convergence in dw") {
  const auto agg = quadratic_agg(1);
  std::vector<double> v;
  for (std::size_t nw : {101, 201, 401}) v.push_back(solve_hjb(agg, small_grid(nw)).value(0.0, 0.0));
  CHECK(richardson_order(v[0], v[1], v[2]) >= 0.9);
}

TEST_CASE("CFL cap and grid validation") {
  const auto agg = quadratic_agg(1);
  auto g = small_grid(2001);
  g.max_total_substeps = 1000;
  CHECK_THROWS_AS(solve_hjb(agg, g), Error);
  g = small_grid(2);
  CHECK_THROWS_AS(solve_hjb(agg, g), Error);
}
