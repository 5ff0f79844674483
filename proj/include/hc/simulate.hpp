#pragma once

// Euler-Maruyama simulation of the contracted hierarchy under the feedback
// policy, the compensation ledger R_1..R_N and realized utilities J^0..J^N.
//
// Dynamics (index k is Player k+1):
//   dX_{N-1} = A_{N-1} dt + sigma dB,   dX_k = A_k dt + dX_{k+1},
//   dW = (1'A*) Y_0 dt - mu_1(A*) dt - Y_0 dX_0,   W(0) = w*_1,
// where A* is the suggested effort and A the effort actually exerted.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hc/hjb.hpp"

namespace hc {

struct SimulationConfig {
  std::size_t n_paths = 10000;
  std::size_t n_steps = 400;
  std::uint64_t seed = 1;
  bool zero_noise = false;
  // Multiplies every Y in the compensation formula. -1 is the sign mutation
  // used to check that the verification gates can fail.
  double payment_sign = 1.0;
  std::size_t record_paths = 0;
  // Each Brownian increment is the sum of this many finer draws, so runs with
  // (n, k) and (2n, k/2) share the same underlying noise.
  std::size_t noise_substeps = 1;
  std::size_t threads = 1;
  std::size_t martingale_buckets = 10;

  void validate() const;
};

// Maps the suggested efforts to the efforts actually exerted.
using EffortRule = std::function<void(const PolicyPoint& suggested, double t, std::span<double> actual)>;

// One path, stored step-major: entry [step * N + k].
struct Trajectory {
  std::size_t players = 0;
  std::size_t steps = 0;
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> W;       // steps + 1 values
  std::vector<double> a_star;  // suggested efforts
  std::vector<double> a;       // exerted efforts
  std::vector<double> Y;       // Y_k per level
  std::vector<double> dX;      // output increments per level
  std::vector<double> X;       // cumulative outputs, (steps + 1) * N
};

// R_k = R_start_k + sum[(sum_{j>=k} A*_j) Y_k - mu_k(A*_{k:})] dt - sum Y_k dX_k,
// with the Y terms multiplied by payment_sign.
std::vector<double> compensation_ledger(const Trajectory& path, const AggregateContract& agg,
                                        std::span<const double> R_start, double payment_sign = 1.0);

// Per-player realized utilities of one path given its payments R.
// out[0] is Player 0, out[k] is Player k.
std::vector<double> path_utilities(const Trajectory& path, const AggregateContract& agg, std::span<const double> R);

struct PathBatch {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  std::size_t players = 0;
  double dt = 0.0;
  std::vector<double> R;          // [path * N + k]
  std::vector<double> J;          // [path * (N + 1) + k]
  std::vector<double> aggregate;  // sum mu_1(A) dt + R_1; equals w*_1 in mean under the suggestion
  std::vector<double> W_T;
  std::vector<std::uint8_t> leaked;
  // Increments of W(t) + int mu_1(A*) ds summed per time bucket: [path * buckets + b].
  std::vector<double> martingale;
  std::size_t buckets = 0;
  double max_telescoping_error = 0.0;
  double max_ledger_mismatch = 0.0;  // relative |R_1 - W(T)|
  double leakage_fraction = 0.0;
  std::vector<Trajectory> records;  // first record_paths paths
  Warnings warnings;
};

PathBatch simulate_contract(const AggregateContract& agg, const FeedbackPolicy& policy, const SimulationConfig& cfg,
                            const EffortRule& rule = {});

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

struct UtilityReport {
  std::vector<Estimate> J;  // J^0 .. J^N
  Estimate aggregate;
  Estimate W_T;
};

UtilityReport realized_utilities(const PathBatch& batch);

Estimate estimate(std::span<const double> xs);
Estimate estimate_strided(std::span<const double> xs, std::size_t stride, std::size_t offset);

// Nested Monte Carlo of E_t[int_t^T mu_1 ds + R_1] from the state of one outer
// path at each requested time fraction.
struct ContinuationPoint {
  double t = 0.0;
  double W = 0.0;
  Estimate conditional;
};

std::vector<ContinuationPoint> continuation_check(const AggregateContract& agg, const FeedbackPolicy& policy,
                                                  const SimulationConfig& cfg, std::span<const double> time_fractions,
                                                  std::size_t n_inner);

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path);

}  // namespace hc
