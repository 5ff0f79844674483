#pragma once

// Backward solver for Player 0's one-dimensional HJB equation
//
//   v_t + sup_{s, y in dphi_hat_1(s)} [ y^2 sigma^2 v_ww / 2 - mu_1(psi_1(s)) v_w + s ] = 0,
//   v(w, T) = q0(w),
//
// with an explicit monotone finite-difference scheme on a uniform w grid.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "hc/hierarchy.hpp"

namespace hc {

// Discrete control set: the valid nodes of psi_1 (optionally restricted to a
// sub-interval of total effort). Between two valid nodes psi_1 and phi_hat_1
// are linear, so the Hamiltonian is linear in s on each segment and the node
// set loses nothing.
struct ControlTable {
  std::vector<double> s;        // total effort
  std::vector<double> drift;    // b = -mu_1(psi_1(s))
  std::vector<double> y_lo;     // supergradient interval of phi_hat_1 at s
  std::vector<double> y_hi;
  std::vector<std::size_t> node;  // index into psi_1 nodes

  std::size_t size() const { return s.size(); }
  double y_abs_max() const;
  double drift_abs_max() const;
};

ControlTable build_control_table(const AggregateContract& agg, std::optional<Interval> domain = std::nullopt);

enum class ControlSearch { coarse_to_fine, exhaustive };

struct HamiltonianValue {
  double value = 0.0;
  double s_star = 0.0;
  double y_star = 0.0;
  std::size_t index = 0;   // position in the control table
  bool truncated = false;  // maximizer sits on the first or last control
};

// y maximizing y^2 * curvature over [lo, hi].
double best_sensitivity(double lo, double hi, double curvature);

// Upwinded generator: b >= 0 uses the forward difference dv_fwd, b < 0 the
// backward one.
HamiltonianValue hamiltonian(const ControlTable& table, double dv_fwd, double dv_bwd, double v_ww, double sigma,
                             ControlSearch search = ControlSearch::exhaustive, std::size_t coarse_points = 128);

// Pointwise form with a single first derivative.
HamiltonianValue hamiltonian(const AggregateContract& agg, double v_w, double v_ww, double sigma,
                             std::optional<Interval> domain = std::nullopt, Warnings* warnings = nullptr);

// Coefficients of v^n_i = l v_{i-1} + c v_i + r v_{i+1} + dt s for one
// explicit step with control (b, y). Monotone iff all three are >= 0.
struct StencilWeights {
  double left = 0.0;
  double center = 0.0;
  double right = 0.0;
};

StencilWeights stencil_weights(double drift, double y, double sigma, double dw, double dt);

struct HjbGrid {
  double w_min = -4.0;
  double w_max = 6.0;
  std::size_t w_nodes = 201;
  std::size_t time_layers = 200;  // stored layers; substeps are added for CFL
  std::optional<Interval> control_domain;
  ControlSearch search = ControlSearch::coarse_to_fine;
  std::size_t coarse_points = 128;
  double cfl_safety = 0.9;
  std::size_t max_total_substeps = 20'000'000;

  double dw() const { return (w_max - w_min) / static_cast<double>(w_nodes - 1); }
  void validate() const;
};

class ValueFunction {
 public:
  std::vector<double> w_nodes;
  std::vector<double> t_nodes;
  // Row-major [t][w].
  std::vector<double> v;
  std::vector<double> s_star;
  std::vector<double> y_star;
  std::size_t substeps_per_layer = 0;
  Warnings warnings;

  std::size_t nw() const { return w_nodes.size(); }
  std::size_t nt() const { return t_nodes.size(); }
  std::size_t at(std::size_t t, std::size_t w) const { return t * w_nodes.size() + w; }
  // Bilinear interpolation, clamped to the grid.
  double value(double w, double t) const;
};

ValueFunction solve_hjb(const AggregateContract& agg, const HjbGrid& grid);

struct PolicyPoint {
  double s = 0.0;
  double y = 0.0;
  std::vector<double> a;  // psi_1(s); sums to s
  bool clamped = false;   // query was outside the (w, t) grid
};

class FeedbackPolicy {
 public:
  FeedbackPolicy() = default;
  FeedbackPolicy(const ValueFunction& vf, const AggregateContract& agg);

  PolicyPoint operator()(double w, double t) const;
  // Same, writing into caller storage (hot path of the simulator).
  void query(double w, double t, PolicyPoint& out) const;
  Interval w_range() const { return {w_nodes_.front(), w_nodes_.back()}; }

 private:
  std::vector<double> w_nodes_, t_nodes_, s_, y_;
  ConcavePiecewise phi_;
  EffortParametrization psi_;
};

FeedbackPolicy extract_policy(const ValueFunction& vf, const AggregateContract& agg);

}  // namespace hc
