#include "hc/quadratic.hpp"

#include <cmath>
#include <limits>

namespace hc {

void QuadraticSpec::validate() const {
  if (alphas.empty()) throw validation_error("quadratic spec: need at least one player");
  if (betas.size() + 1 != alphas.size()) throw validation_error("quadratic spec: need N-1 payment slopes");
  if (!(alpha0 > 0.0)) throw validation_error("quadratic spec: alpha0 must be > 0");
  for (double a : alphas)
    if (!(a > 0.0)) throw validation_error("quadratic spec: alphas must be > 0");
  for (double b : betas)
    if (!(b >= 0.0)) throw validation_error("quadratic spec: betas must be >= 0");
}

QuadraticAggregate quadratic_recursion(const QuadraticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.alphas.size();
  QuadraticAggregate out;
  out.levels.resize(n);

  QuadraticLevel& base = out.levels[n - 1];
  base.lambda = {spec.alphas[n - 1] * spec.alphas[n - 1]};
  base.g = {1.0};
  base.inner_slope = 1.0;
  base.curvature = base.lambda[0];

  for (std::size_t step = 1; step < n; ++step) {
    const std::size_t k = n - 1 - step;
    const QuadraticLevel& next = out.levels[k + 1];
    QuadraticLevel& cur = out.levels[k];
    const double a2 = spec.alphas[k] * spec.alphas[k];
    const double beta = spec.betas[k];
    const double c = beta * next.curvature;
    const double t = c / (a2 + c);

    cur.inner_slope = t;
    cur.lambda.reserve(next.lambda.size() + 1);
    cur.lambda.push_back(a2);
    for (double l : next.lambda) cur.lambda.push_back(beta * l);
    cur.g.reserve(next.g.size() + 1);
    cur.g.push_back(t);
    for (double gj : next.g) cur.g.push_back((1.0 - t) * gj);

    double curv = 0.0;
    for (std::size_t j = 0; j < cur.g.size(); ++j) curv += cur.g[j] * cur.lambda[j] * cur.g[j];
    cur.curvature = curv;
  }
  out.gamma = out.levels.front().curvature;
  return out;
}

QuadraticHamiltonian quadratic_hamiltonian_coefficient(double gamma, double v_w, double v_ww, double sigma) {
  QuadraticHamiltonian h;
  h.coefficient = 0.5 * gamma * (gamma * sigma * sigma * v_ww + v_w);
  if (h.coefficient >= 0.0) {
    h.unbounded = true;
    h.s_star = std::numeric_limits<double>::infinity();
    h.value = std::numeric_limits<double>::infinity();
  } else {
    h.s_star = -1.0 / (2.0 * h.coefficient);
    h.value = -1.0 / (4.0 * h.coefficient);
  }
  return h;
}

HierarchySpec to_hierarchy(const QuadraticSpec& spec, Interval effort_domain, double sigma, double horizon) {
  spec.validate();
  HierarchySpec h;
  h.sigma = sigma;
  h.horizon = horizon;
  h.terminal = TerminalUtility::quadratic(spec.alpha0);
  for (std::size_t k = 0; k < spec.alphas.size(); ++k) {
    PlayerSpec p;
    p.utility = Utility::quadratic(spec.alphas[k]);
    p.beta = k < spec.betas.size() ? spec.betas[k] : 0.0;
    p.reservation = 0.0;
    p.effort_domain = effort_domain;
    h.players.push_back(std::move(p));
  }
  return h;
}

}  // namespace hc
