// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and sample sizes are fixed here; seeds are printed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hc/quadratic.hpp"
#include "hc/verify.hpp"
#include "oracles.hpp"

using namespace hc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && secs > budget_s) {
    o.pass = false;
    o.detail += " [over the " + std::to_string(static_cast<int>(budget_s)) + " s budget]";
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d  %-4s  %-34s %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(),
              secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

AggregateContract quadratic_agg(std::size_t n, std::size_t y_nodes = 513) {
  QuadraticSpec q;
  q.alphas.assign(n, 1.0);
  q.betas.assign(n - 1, 1.0);
  return build_aggregate(to_hierarchy(q, {-0.5, 2.5}, 1.0, 1.0), {y_nodes, 33});
}

HjbGrid ladder_grid(std::size_t nw) {
  HjbGrid g;
  g.w_min = -4.0;
  g.w_max = 6.0;
  g.w_nodes = nw;
  g.time_layers = 200;
  return g;
}

struct RandomQuadratic {
  QuadraticSpec q;
  AggregateContract agg;
};

std::vector<RandomQuadratic> random_quadratics() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> N(1, 5);
  std::uniform_real_distribution<double> A(0.5, 2.0), B(0.0, 1.5);
  std::vector<RandomQuadratic> out;
  for (int trial = 0; trial < 20; ++trial) {
    RandomQuadratic r;
    const int n = N(rng);
    for (int k = 0; k < n; ++k) r.q.alphas.push_back(A(rng));
    for (int k = 0; k + 1 < n; ++k) r.q.betas.push_back(B(rng));
    r.agg = build_aggregate(to_hierarchy(r.q, {-2.0, 2.0}, 1.0, 1.0), {257, 33});
    out.push_back(std::move(r));
  }
  return out;
}

AggregateContract double_well() {
  HierarchySpec spec;
  PlayerSpec p;
  p.utility = Utility::polynomial({-1.0, 0.0, 2.0, 0.0, -1.0});
  p.effort_domain = {-2.0, 2.0};
  spec.players.push_back(p);
  return build_aggregate(spec, {401, 33});
}

}  // namespace

int main() {
  // 1. Upper hull against the all-chords reference.
  criterion(1, "envelope oracle equivalence", 5.0, [] {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> size(2, 301);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> gap(0.01, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      GridFunction g;
      double x = noise(rng);
      const int n = size(rng);
      for (int i = 0; i < n; ++i) {
        x += gap(rng);
        g.nodes.push_back(x);
        g.values.push_back(noise(rng) - 0.05 * x * x);
      }
      const auto env = concave_envelope_1d(g);
      const auto ref = oracle::all_chords_hull(g.nodes, g.values);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(env.values[i] - ref[i]));
    }
    return Outcome{worst <= 1e-10, fmt("50 grids, max |hull - oracle| = %.2e", worst)};
  });

  // 2 and 3 share the random quadratic specs.
  std::vector<RandomQuadratic> specs;
  criterion(2, "quadratic oracle equivalence", 60.0, [&] {
    specs = random_quadratics();
    double worst_g = 0.0, worst_gamma = 0.0, worst_phi = 0.0;
    for (const auto& r : specs) {
      const auto closed = quadratic_recursion(r.q);
      const auto& L = r.agg.levels[0];
      const auto& g = closed.levels[0].g;
      std::vector<double> num(g.size(), 0.0);
      double yy = 0.0, yyyy = 0.0, phiyy = 0.0, scale = 0.0, err = 0.0;
      for (std::size_t i = 0; i < L.envelope.size(); ++i) {
        if (!L.psi.valid(i) || L.truncated[i]) continue;
        const double y = L.envelope.nodes[i];
        const auto p = L.psi.point(i);
        for (std::size_t k = 0; k < g.size(); ++k) num[k] += p[k] * y;
        yy += y * y;
        yyyy += y * y * y * y;
        phiyy += L.envelope.values[i] * y * y;
        const double ref = closed.phi1_hat(y);
        scale = std::max(scale, std::abs(ref));
        err = std::max(err, std::abs(L.envelope.values[i] - ref));
      }
      const double gmax = *std::max_element(g.begin(), g.end());
      for (std::size_t k = 0; k < g.size(); ++k) worst_g = std::max(worst_g, std::abs(num[k] / yy - g[k]) / gmax);
      worst_gamma = std::max(worst_gamma, std::abs(-2.0 * phiyy / yyyy - closed.gamma) / closed.gamma);
      worst_phi = std::max(worst_phi, err / scale);
    }
    const bool ok = worst_g <= 1e-3 && worst_gamma <= 1e-3 && worst_phi <= 1e-3;
    return Outcome{ok, fmt("20 specs, rel err g1 %.1e, gamma %.1e, phi1 %.1e", worst_g, worst_gamma, worst_phi)};
  });

  criterion(3, "sum identity", 0.0, [&] {
    std::vector<AggregateContract> all;
    for (const auto& r : specs) all.push_back(r.agg);
    all.push_back(double_well());
    all.push_back(quadratic_agg(3));
    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& agg : all)
      for (const auto& L : agg.levels)
        for (std::size_t i = 0; i < L.psi.size(); ++i) {
          if (!L.psi.valid(i)) continue;
          const auto p = L.psi.point(i);
          double s = 0.0;
          for (double a : p) s += a;
          worst = std::max(worst, std::abs(s - L.psi.y_nodes()[i]));
          ++checked;
        }
    return Outcome{worst <= 1e-12, fmt("%.0f nodes, max |1'psi(y) - y| = %.1e", static_cast<double>(checked), worst)};
  });

  // 4. Richardson order in dw at (w1*, 0); the N=2 ladder is reused below.
  std::vector<ValueFunction> ladder2;
  for (std::size_t n : {1, 2}) {
    const std::string title = "HJB self-convergence, N=" + std::to_string(n);
    criterion(4, title.c_str(), 120.0, [&] {
      const auto agg = quadratic_agg(n);
      std::vector<double> v;
      std::vector<ValueFunction> vfs;
      for (std::size_t nw : {101, 201, 401}) {
        vfs.push_back(solve_hjb(agg, ladder_grid(nw)));
        v.push_back(vfs.back().value(agg.w_star[0], 0.0));
      }
      if (n == 2) ladder2 = std::move(vfs);
      const double order = richardson_order(v[0], v[1], v[2]);
      return Outcome{order >= 0.9, fmt("v = %.5f, %.5f, %.5f", v[0], v[1], v[2]) + fmt(", order %.3f", order)};
    });
  }

  const auto agg2 = quadratic_agg(2);
  PathBatch big;
  criterion(5, "DP consistency", 120.0, [&] {
    if (ladder2.size() != 3) return Outcome{false, "no value function ladder"};
    const double v = ladder2[2].value(0.0, 0.0);
    const double grid_err = std::abs(v - ladder2[1].value(0.0, 0.0));
    SimulationConfig cfg;
    cfg.n_paths = 100000;
    cfg.n_steps = 400;
    cfg.seed = 5;
    big = simulate_contract(agg2, extract_policy(ladder2[2], agg2), cfg);
    const auto r = realized_utilities(big);
    const double tol = std::max(3.0 * r.J[0].se, grid_err);
    const double gap = std::abs(r.J[0].mean - v);
    return Outcome{gap <= tol, fmt("J0 = %.5f (se %.5f) vs v = %.5f", r.J[0].mean, r.J[0].se, v) +
                                   fmt(", |gap| %.5f <= %.5f, seed 5", gap, tol)};
  });

  const FeedbackPolicy policy = extract_policy(ladder2.size() == 3 ? ladder2[1] : solve_hjb(agg2, ladder_grid(201)),
                                               agg2);
  IcOptions ic;
  ic.sim.n_paths = 10000;
  ic.sim.n_steps = 100;
  ic.sim.seed = 6;

  auto run_ic = [&](const IcOptions& opt, std::size_t& failed, std::string& worst_name, double& worst_excess) {
    failed = 0;
    worst_excess = -1e300;
    for (const auto& d : default_deviations(agg2))
      for (const auto& g : check_incentive_compatibility(agg2, policy, d, opt)) {
        if (!g.pass) ++failed;
        if (g.statistic - g.threshold > worst_excess) {
          worst_excess = g.statistic - g.threshold;
          worst_name = g.name;
        }
      }
  };

  criterion(6, "incentive compatibility", 0.0, [&] {
    std::size_t failed = 0;
    std::string name;
    double excess = 0.0;
    run_ic(ic, failed, name, excess);
    return Outcome{failed == 0, "12 deviations, " + std::to_string(failed) + " profitable; closest " + name +
                                    fmt(" (stat - 3se = %.4f), seed 6", excess)};
  });

  criterion(7, "individual rationality binds", 0.0, [&] {
    const auto gates = check_incentive_compatibility(agg2, policy, {}, ic);
    bool ok = true;
    std::string d;
    for (const auto& g : gates) {
      ok = ok && g.pass;
      d += g.name + fmt(" %.4f/%.4f  ", std::abs(g.statistic), g.threshold);
    }
    return Outcome{ok, d + "seed 6"};
  });

  criterion(8, "continuation identity", 0.0, [&] {
    SimulationConfig cfg;
    cfg.n_steps = 100;
    cfg.seed = 8;
    const std::vector<double> times{0.1, 0.3, 0.5, 0.7, 0.9};
    const auto pts = continuation_check(agg2, policy, cfg, times, 2000);
    bool ok = pts.size() == 5;
    double worst = 0.0;
    for (const auto& p : pts) {
      const double z = std::abs(p.conditional.mean - p.W) / std::max(p.conditional.se, 1e-300);
      worst = std::max(worst, z);
      ok = ok && std::abs(p.conditional.mean - p.W) <= 3.0 * p.conditional.se + 1e-10;
    }
    return Outcome{ok, fmt("5 times x 2000 inner paths, worst |gap|/se = %.2f, seed 8", worst)};
  });

  criterion(9, "touching-set necessity", 0.0, [] {
    const auto rep = check_touching_necessity(double_well(), 0, 100, 9);
    const bool ok = !rep.vacuous && rep.witnesses == 100 && rep.worst_margin < -1e-9;
    return Outcome{ok, fmt("%.0f/100 witnesses, worst margin %.3e, seed 9", static_cast<double>(rep.witnesses),
                           rep.worst_margin)};
  });

  criterion(10, "ledger consistency trap", 0.0, [&] {
    if (big.n_paths == 0) return Outcome{false, "no batch"};
    double worst = 0.0;
    for (std::size_t p = 0; p < big.n_paths; ++p)
      worst = std::max(worst, std::abs(big.R[p * big.players] - big.W_T[p]) / std::max(1.0, std::abs(big.W_T[p])));
    return Outcome{worst <= 1e-10, fmt("100000 paths, max rel |R1 - W(T)| = %.1e", worst)};
  });

  criterion(11, "mutation sensitivity", 0.0, [&] {
    IcOptions mutated = ic;
    mutated.sim.payment_sign = -1.0;
    std::size_t failed = 0;
    std::string name;
    double excess = 0.0;
    run_ic(mutated, failed, name, excess);
    return Outcome{failed > 0, "negated Y: criterion 6 fails on " + std::to_string(failed) + " of 12 deviations"};
  });

  std::printf("%s: %d criterion line(s) failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
