#pragma once

// One-dimensional concave envelopes and the (f, Gamma)-envelope construction
// for the coordinate-sum aggregator f(x) = x_1 + ... + x_n.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "hc/error.hpp"

namespace hc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
  double clamp(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
};

// Sampled function on strictly increasing nodes. A value of -inf marks an
// empty fiber; every other value must be finite.
struct GridFunction {
  std::vector<double> nodes;
  std::vector<double> values;

  std::size_t size() const { return nodes.size(); }
  void validate() const;
};

struct SlopeInterval {
  double lo = 0.0;
  double hi = 0.0;

  double midpoint() const { return 0.5 * (lo + hi); }
  bool contains(double s, double tol = 0.0) const { return s >= lo - tol && s <= hi + tol; }
  double clamp(double s) const { return s < lo ? lo : (s > hi ? hi : s); }
};

// Least concave majorant of a point set, stored on the input nodes that lie
// between the first and last finite input value. left_slope/right_slope are
// the slopes of the hull segments meeting at each node; at the two end nodes
// the missing side repeats the one-sided slope.
struct ConcavePiecewise {
  std::vector<double> nodes;
  std::vector<double> values;
  std::vector<double> left_slope;
  std::vector<double> right_slope;
  std::vector<std::uint8_t> touching;

  std::size_t size() const { return nodes.size(); }
  Interval domain() const { return {nodes.front(), nodes.back()}; }
  // Linear interpolation between nodes; throws a domain error outside.
  double operator()(double y) const;
  // Index i with nodes[i] <= y <= nodes[i+1] (clamped to the last segment).
  std::size_t segment(double y) const;
};

ConcavePiecewise concave_envelope_1d(const GridFunction& g);

// [right_slope, left_slope] at y; a singleton inside a hull segment.
SlopeInterval supergradient(const ConcavePiecewise& env, double y);

// Touching-set parametrization psi: y -> (a_1, ..., a_d) with sum(a) = y.
// Points are stored row-major. Nodes with valid == 0 are outside the
// parametrized set; between two valid neighbours psi is linear.
class EffortParametrization {
 public:
  EffortParametrization() = default;
  EffortParametrization(std::vector<double> y_nodes, std::size_t dim, std::vector<double> coords,
                        std::vector<std::uint8_t> valid);

  // Parametrization of the zero-player set: the single empty vector at y = 0.
  static EffortParametrization empty();
  static EffortParametrization identity(std::vector<double> y_nodes, std::vector<std::uint8_t> valid = {});

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return y_nodes_.size(); }
  std::span<const double> y_nodes() const { return y_nodes_; }
  std::span<const double> point(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  std::span<const double> coords() const { return coords_; }
  std::span<const std::uint8_t> valid_mask() const { return valid_; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }
  Interval domain() const { return {y_nodes_.front(), y_nodes_.back()}; }

  // Writes psi(y) into out (size dim()). Returns false when y is not in the
  // parametrized set.
  bool evaluate(double y, std::span<double> out) const;
  bool feasible(double y) const;
  // Bracketing node pair (i, i+1) for y, or (i, i) when y sits on node i.
  std::pair<std::size_t, std::size_t> bracket(double y) const;
  // Nearest valid node to y; throws if no node is valid.
  std::size_t nearest_valid(double y) const;

 private:
  std::vector<double> y_nodes_;
  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::vector<std::uint8_t> valid_;
  bool uniform_ = false;
  double step_ = 0.0;
};

// g(z, downstream) where downstream = psi(y - z).
using FiberObjective = std::function<double(double z, std::span<const double> downstream)>;

struct FiberOptions {
  Interval own_domain{-1.0, 1.0};
  int coarse_points = 33;
  double z_tol = 1e-11;
  double plateau_tol = 1e-12;
};

// T(y) and phi(y) = g(T(y), psi(y - T(y))) on y_grid. Empty fibers carry
// T = NaN and phi = -inf. `points` holds (T, psi(y - T)) row-major.
struct FiberReduction {
  GridFunction inner;
  GridFunction value;
  std::vector<double> points;
  std::vector<std::uint8_t> truncated;
  Warnings warnings;
};

FiberReduction reduce_fiber_argmax(const FiberObjective& g, const EffortParametrization& psi,
                                   std::span<const double> y_grid, const FiberOptions& opt);

struct FGammaEnvelope {
  ConcavePiecewise envelope;
  EffortParametrization psi;
  FiberReduction fiber;
  std::size_t offset = 0;  // index of envelope.nodes[0] within the fiber grid
  Warnings warnings;
};

FGammaEnvelope fgamma_envelope(const FiberObjective& g, const EffortParametrization& psi,
                               std::span<const double> y_grid, const FiberOptions& opt);

std::vector<double> linspace(double lo, double hi, std::size_t n);

}  // namespace hc
