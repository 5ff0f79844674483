#pragma once

// Monte Carlo checks of incentive compatibility and individual rationality,
// the touching-set necessity witness search, and convergence tables.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hc/simulate.hpp"

namespace hc {

struct DeviationStrategy {
  enum class Kind { suggested, zero_effort, scale, constant, off_touching };
  Kind kind = Kind::suggested;
  double param = 0.0;                  // kappa for scale, a-bar for constant, delta for off_touching
  std::optional<std::size_t> player;   // 0-based; nullopt deviates the whole sub-hierarchy at once

  std::string name() const;
  static DeviationStrategy parse(const std::string& tag, double param, std::optional<std::size_t> player);
};

// Effort rule realizing the deviation. Throws a validation error when the
// deviation cannot stay inside the effort domains.
EffortRule deviation_rule(const DeviationStrategy& dev, const AggregateContract& agg);

struct GateResult {
  std::string name;
  double statistic = 0.0;  // estimate minus its reference
  double se = 0.0;
  double threshold = 0.0;  // allowed one-sided (or absolute) deviation
  bool two_sided = false;
  bool pass = false;
  std::uint64_t seed = 0;
};

struct IcOptions {
  SimulationConfig sim;
  double n_se = 3.0;
};

// For suggested effort: one two-sided gate per player plus the aggregate.
// Otherwise: one one-sided gate for the deviating player (or the aggregate).
std::vector<GateResult> check_incentive_compatibility(const AggregateContract& agg, const FeedbackPolicy& policy,
                                                      const DeviationStrategy& dev, const IcOptions& opt);

// Default deviation families applied to every player and to the aggregate.
std::vector<DeviationStrategy> default_deviations(const AggregateContract& agg);

// min over fiber nodes s' of mu_k(a) + y (s' - 1'a) - phi_k(s'). Negative
// means a separating deviation exists.
struct SeparationWitness {
  double margin = 0.0;
  double s_prime = 0.0;
};

SeparationWitness separating_margin(const AggregateContract& agg, std::size_t level, std::span<const double> a,
                                    double y);

struct TouchingReport {
  bool vacuous = false;
  std::size_t level = 0;
  std::size_t samples = 0;
  std::size_t witnesses = 0;
  double worst_margin = 0.0;  // largest (least negative) margin over samples
  double tolerance = 0.0;
  bool pass = false;
};

TouchingReport check_touching_necessity(const AggregateContract& agg, std::size_t level, std::size_t n_samples,
                                        std::uint64_t seed);

struct ConvergenceRow {
  std::string study;      // hjb_dw, mc_paths, euler_dt
  std::size_t rung = 0;
  double parameter = 0.0;  // dw, n_paths or dt
  double value = 0.0;
  double error = 0.0;      // study specific: successive difference or SE
  double order = 0.0;      // NaN when undefined
};

struct ConvergenceLadders {
  HjbGrid base_grid;
  std::vector<std::size_t> w_nodes{101, 201, 401};
  std::vector<std::size_t> n_paths{2000, 4000, 8000};
  std::vector<std::size_t> n_steps{50, 100, 200};
  std::size_t euler_paths = 4000;
  std::uint64_t seed = 7;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double hjb_order = 0.0;
  bool mc_scaling_ok = false;
  bool euler_monotone = false;
};

ConvergenceReport convergence_report(const AggregateContract& agg, const ConvergenceLadders& ladders);

// log2(|v0 - v1| / |v1 - v2|) for a halving ladder.
double richardson_order(double v0, double v1, double v2);

}  // namespace hc
