#pragma once

// Closed-form aggregate contract when every running utility is quadratic,
// r^k(a) = -alpha_k^2 a^2 / 2, and all reservation utilities are zero.

#include <cstddef>
#include <vector>

#include "hc/hierarchy.hpp"

namespace hc {

struct QuadraticSpec {
  double alpha0 = 1.0;              // Player 0: q0(w) = -alpha0^2 w^2 / 2
  std::vector<double> alphas;       // alpha_1 .. alpha_N, all > 0
  std::vector<double> betas;        // beta_1 .. beta_{N-1}, all >= 0

  void validate() const;
};

struct QuadraticLevel {
  std::vector<double> lambda;  // diagonal of Lambda_k
  std::vector<double> g;       // psi_k(y) = g * y, sum(g) = 1
  double inner_slope = 1.0;    // T_k(y) = inner_slope * y
  double curvature = 0.0;      // g' Lambda g; phi_hat_k(y) = -curvature * y^2 / 2
};

struct QuadraticAggregate {
  std::vector<QuadraticLevel> levels;  // levels[0] is Player 1
  double gamma = 0.0;                  // g_1' Lambda_1 g_1

  double phi1_hat(double y) const { return -0.5 * gamma * y * y; }
  double phi1_slope(double y) const { return -gamma * y; }
};

QuadraticAggregate quadratic_recursion(const QuadraticSpec& spec);

// Coefficient c of the reduced Hamiltonian c s^2 + s. For c < 0 the
// supremum is attained at s* = -1/(2c) with value -1/(4c); c >= 0 means the
// supremum over the real line is +infinity.
struct QuadraticHamiltonian {
  double coefficient = 0.0;
  bool unbounded = false;
  double s_star = 0.0;
  double value = 0.0;
};

QuadraticHamiltonian quadratic_hamiltonian_coefficient(double gamma, double v_w, double v_ww, double sigma);

// Generic hierarchy spec with the same utilities, for cross-checking the
// numerical pipeline. Every player gets `effort_domain`.
HierarchySpec to_hierarchy(const QuadraticSpec& spec, Interval effort_domain, double sigma, double horizon);

}  // namespace hc
