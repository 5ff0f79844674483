#pragma once

// Backward construction of the aggregate contract for the chain
// Player 0 -> Player 1 -> ... -> Player N.
//
// Indexing: C++ containers are 0-based, so players[i], levels[i] and row i
// of the gamma table all refer to Player i+1. Player 0 (the top principal)
// owns only the terminal utility q0.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hc/envelope.hpp"
#include "hc/error.hpp"

namespace hc {

// Running utility r(a) of one player.
class Utility {
 public:
  enum class Kind { quadratic, power, polynomial, grid };

  static Utility quadratic(double alpha);                  // -alpha^2 a^2 / 2
  static Utility power(double coef, double exponent);      // -coef |a|^exponent
  static Utility polynomial(std::vector<double> coeffs);   // sum_i c_i a^i
  static Utility sampled(GridFunction grid);               // piecewise linear

  Kind kind() const { return kind_; }
  double operator()(double a) const;
  // Strict concavity is known in closed form for quadratic and power tags;
  // polynomial tags are probed on `domain`; sampled grids never qualify.
  bool strictly_concave(const Interval& domain) const;
  bool concave_on(const Interval& domain) const;

  double alpha() const { return params_.at(0); }
  const std::vector<double>& params() const { return params_; }
  const GridFunction& grid() const { return grid_; }
  std::string tag() const;

 private:
  Kind kind_ = Kind::quadratic;
  std::vector<double> params_;
  GridFunction grid_;
};

// Player 0's terminal utility q0(R1).
class TerminalUtility {
 public:
  enum class Kind { quadratic, linear, zero };

  static TerminalUtility quadratic(double alpha0) { return {Kind::quadratic, alpha0}; }  // -alpha0^2 w^2 / 2
  static TerminalUtility linear(double slope) { return {Kind::linear, slope}; }          // -slope * w
  static TerminalUtility zero() { return {Kind::zero, 0.0}; }

  Kind kind() const { return kind_; }
  double param() const { return param_; }
  double operator()(double w) const;
  std::string tag() const;

 private:
  TerminalUtility(Kind k, double p) : kind_(k), param_(p) {}
  Kind kind_;
  double param_;
};

struct PlayerSpec {
  Utility utility = Utility::quadratic(1.0);
  double beta = 0.0;         // q(R_next) = -beta * R_next; unused for the last player
  double reservation = 0.0;  // w_k
  Interval effort_domain{-2.0, 2.0};
};

struct HierarchySpec {
  std::vector<PlayerSpec> players;
  double sigma = 1.0;
  double horizon = 1.0;
  TerminalUtility terminal = TerminalUtility::quadratic(1.0);

  std::size_t size() const { return players.size(); }
  std::vector<double> betas() const;  // beta_1 .. beta_{N-1}
  // Throws a validation error on hard violations; soft ones (non-concave
  // utilities) are appended to `warnings` when provided.
  void validate(Warnings* warnings = nullptr) const;
};

// Upper-triangular gamma_{i,j} = prod_{l=i}^{j-1} beta_l, gamma_{i,i} = 1.
class GammaTable {
 public:
  GammaTable() = default;
  explicit GammaTable(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

GammaTable gamma_coefficients(std::span<const double> betas, std::size_t n_players);

// mu_i(a_i, ..., a_N) = sum_j gamma_{i,j} r^j(a_j); `tail` holds a_i..a_N.
double aggregate_cost(std::size_t i, const GammaTable& gamma, std::span<const Utility> utilities,
                      std::span<const double> tail);

struct GridConfig {
  std::size_t y_nodes = 1025;
  int coarse_points = 33;
};

struct Level {
  ConcavePiecewise envelope;       // phi_hat
  EffortParametrization psi;       // touching-set parametrization on envelope.nodes
  std::vector<double> fiber;       // fiber supremum phi on envelope.nodes
  std::vector<double> inner;       // own-effort maximizer T on envelope.nodes
  std::vector<std::uint8_t> truncated;  // maximizer at a searched boundary here or downstream
};

class AggregateContract {
 public:
  HierarchySpec spec;
  GridConfig grid;
  GammaTable gamma;
  std::vector<double> w_star;
  std::vector<Level> levels;
  Warnings warnings;

  std::size_t size() const { return levels.size(); }
  std::vector<Utility> utilities() const;
  double mu(std::size_t i, std::span<const double> tail) const;
  const ConcavePiecewise& phi1_hat() const { return levels.front().envelope; }
  const EffortParametrization& psi1() const { return levels.front().psi; }

  // Rebuilds the cached utility list after spec edits or deserialization.
  void refresh();

 private:
  std::vector<Utility> utilities_;
};

AggregateContract build_aggregate(const HierarchySpec& spec, const GridConfig& grid = {});

}  // namespace hc
