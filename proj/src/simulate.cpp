#include "hc/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace hc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Context {
  const AggregateContract& agg;
  const FeedbackPolicy& policy;
  const SimulationConfig& cfg;
  const EffortRule& rule;
  std::size_t n = 0;
  double dt = 0.0;
  double sigma = 0.0;
  Interval w_range;
};

struct PathScratch {
  PolicyPoint pp;
  std::vector<double> tail_sums;
  bool leaked = false;
};

// Simulates `steps` steps starting at W0 and global step index `first`.
void run_path(const Context& c, double W0, std::size_t first, std::size_t steps, std::mt19937_64& rng,
              Trajectory& tr, PathScratch& sc, std::span<double> buckets) {
  const std::size_t n = c.n;
  tr.players = n;
  tr.steps = steps;
  tr.dt = c.dt;
  tr.t0 = static_cast<double>(first) * c.dt;
  tr.W.assign(steps + 1, 0.0);
  tr.a_star.assign(steps * n, 0.0);
  tr.a.assign(steps * n, 0.0);
  tr.Y.assign(steps * n, 0.0);
  tr.dX.assign(steps * n, 0.0);
  tr.X.assign((steps + 1) * n, 0.0);
  sc.tail_sums.assign(n, 0.0);
  sc.leaked = false;

  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t ks = c.cfg.noise_substeps;
  const double sub_sd = std::sqrt(c.dt / static_cast<double>(ks));
  const double sign = c.cfg.payment_sign;
  const std::size_t total = c.cfg.n_steps;
  const std::size_t nb = buckets.size();

  double W = W0;
  tr.W[0] = W;
  for (std::size_t m = 0; m < steps; ++m) {
    const std::size_t global = first + m;
    const double t = static_cast<double>(global) * c.dt;
    c.policy.query(W, t, sc.pp);
    if (sc.pp.clamped || !c.w_range.contains(W)) sc.leaked = true;

    double* a_star = &tr.a_star[m * n];
    double* a = &tr.a[m * n];
    double* Y = &tr.Y[m * n];
    double* dX = &tr.dX[m * n];
    std::copy(sc.pp.a.begin(), sc.pp.a.end(), a_star);
    std::copy(sc.pp.a.begin(), sc.pp.a.end(), a);
    if (c.rule) c.rule(sc.pp, t, std::span<double>(a, n));

    double dB = 0.0;
    for (std::size_t k = 0; k < ks; ++k) {
      const double z = normal(rng);
      if (!c.cfg.zero_noise) dB += z * sub_sd;
    }

    dX[n - 1] = a[n - 1] * c.dt + c.sigma * dB;
    for (std::size_t k = n - 1; k-- > 0;) dX[k] = a[k] * c.dt + dX[k + 1];

    double acc = 0.0;
    for (std::size_t k = n; k-- > 0;) {
      acc += a_star[k];
      sc.tail_sums[k] = acc;
    }
    Y[0] = sc.pp.y;
    for (std::size_t k = 1; k < n; ++k) {
      const auto& env = c.agg.levels[k].envelope;
      Y[k] = supergradient(env, env.domain().clamp(sc.tail_sums[k])).midpoint();
    }

    const double mu = c.agg.mu(0, std::span<const double>(a_star, n));
    const double W_next = W + sign * (sc.pp.s * Y[0] * c.dt - Y[0] * dX[0]) - mu * c.dt;
    if (nb > 0) {
      const std::size_t b = std::min(nb - 1, global * nb / total);
      buckets[b] += W_next - W + mu * c.dt;
    }
    W = W_next;
    tr.W[m + 1] = W;
    for (std::size_t k = 0; k < n; ++k) tr.X[(m + 1) * n + k] = tr.X[m * n + k] + dX[k];
  }
  if (!c.w_range.contains(W)) sc.leaked = true;
}

std::vector<double> ledger_range(const Trajectory& path, const AggregateContract& agg,
                                 std::span<const double> R_start, double sign, std::size_t begin,
                                 std::size_t end) {
  const std::size_t n = path.players;
  if (R_start.size() != n) throw validation_error("compensation ledger: need one starting value per player");
  std::vector<double> drift(n, 0.0), stoch(n, 0.0);
  for (std::size_t m = begin; m < end; ++m) {
    const double* a_star = &path.a_star[m * n];
    const double* Y = &path.Y[m * n];
    const double* dX = &path.dX[m * n];
    double tail = 0.0;
    for (std::size_t k = n; k-- > 0;) {
      tail += a_star[k];
      const double mu_k = agg.mu(k, std::span<const double>(a_star + k, n - k));
      drift[k] += (sign * tail * Y[k] - mu_k) * path.dt;
      stoch[k] += Y[k] * dX[k];
    }
  }
  std::vector<double> R(n);
  for (std::size_t k = 0; k < n; ++k) R[k] = R_start[k] + drift[k] - sign * stoch[k];
  return R;
}

}  // namespace

void SimulationConfig::validate() const {
  if (n_paths < 2) throw validation_error("simulation.n_paths: must be >= 2");
  if (n_steps < 1) throw validation_error("simulation.n_steps: must be >= 1");
  if (noise_substeps < 1) throw validation_error("simulation.noise_substeps: must be >= 1");
  if (threads < 1) throw validation_error("simulation.threads: must be >= 1");
  if (!std::isfinite(payment_sign)) throw validation_error("simulation.payment_sign: must be finite");
}

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path) {
  return splitmix64(splitmix64(seed) ^ (path + 0x632be59bd9b4e019ULL));
}

std::vector<double> compensation_ledger(const Trajectory& path, const AggregateContract& agg,
                                        std::span<const double> R_start, double payment_sign) {
  return ledger_range(path, agg, R_start, payment_sign, 0, path.steps);
}

std::vector<double> path_utilities(const Trajectory& path, const AggregateContract& agg, std::span<const double> R) {
  const std::size_t n = path.players;
  const auto utils = agg.utilities();
  std::vector<double> J(n + 1, 0.0);
  for (std::size_t m = 0; m < path.steps; ++m) {
    const double* a = &path.a[m * n];
    for (std::size_t k = 0; k < n; ++k) {
      J[0] += a[k] * path.dt;
      J[k + 1] += utils[k](a[k]) * path.dt;
    }
  }
  J[0] += agg.spec.terminal(R[0]);
  for (std::size_t k = 0; k < n; ++k) {
    J[k + 1] += R[k];
    if (k + 1 < n) J[k + 1] -= agg.spec.players[k].beta * R[k + 1];
  }
  return J;
}

PathBatch simulate_contract(const AggregateContract& agg, const FeedbackPolicy& policy, const SimulationConfig& cfg,
                            const EffortRule& rule) {
  cfg.validate();
  if (agg.levels.empty()) throw validation_error("simulate: aggregate contract is empty");
  if (!(agg.spec.horizon > 0.0)) throw validation_error("simulate: horizon must be > 0");
  const std::size_t n = agg.size();
  Context ctx{agg, policy, cfg, rule, n, agg.spec.horizon / static_cast<double>(cfg.n_steps), agg.spec.sigma,
              policy.w_range()};

  PathBatch batch;
  batch.n_paths = cfg.n_paths;
  batch.n_steps = cfg.n_steps;
  batch.players = n;
  batch.dt = ctx.dt;
  batch.buckets = std::min(cfg.martingale_buckets, cfg.n_steps);
  batch.R.assign(cfg.n_paths * n, 0.0);
  batch.J.assign(cfg.n_paths * (n + 1), 0.0);
  batch.aggregate.assign(cfg.n_paths, 0.0);
  batch.W_T.assign(cfg.n_paths, 0.0);
  batch.leaked.assign(cfg.n_paths, 0);
  batch.martingale.assign(cfg.n_paths * batch.buckets, 0.0);
  batch.records.resize(std::min(cfg.record_paths, cfg.n_paths));

  const std::size_t n_threads = std::min(cfg.threads, cfg.n_paths);
  std::vector<double> tele(n_threads, 0.0), mismatch(n_threads, 0.0);
  std::vector<std::exception_ptr> errors(n_threads);

  auto worker = [&](std::size_t tid) {
    try {
      Trajectory tr;
      PathScratch sc;
      for (std::size_t p = tid; p < cfg.n_paths; p += n_threads) {
        std::mt19937_64 rng(path_seed(cfg.seed, p));
        std::span<double> buckets(batch.martingale.data() + p * batch.buckets, batch.buckets);
        run_path(ctx, agg.w_star[0], 0, cfg.n_steps, rng, tr, sc, buckets);

        const auto R = compensation_ledger(tr, agg, agg.w_star, cfg.payment_sign);
        const double WT = tr.W.back();
        const double rel = std::abs(R[0] - WT) / std::max(1.0, std::abs(WT));
        mismatch[tid] = std::max(mismatch[tid], rel);
        if (!(rel <= 1e-10)) {
          std::ostringstream os;
          os << "compensation ledger disagrees with the simulated continuation value on path " << p
             << ": R_1 = " << R[0] << ", W(T) = " << WT;
          throw internal_error(os.str());
        }

        // Telescoping of outputs against the time integrals of effort.
        std::vector<double> integral(n, 0.0);
        for (std::size_t m = 0; m < tr.steps; ++m) {
          for (std::size_t k = 0; k < n; ++k) {
            integral[k] += tr.a[m * n + k] * tr.dt;
            const double next = k + 1 < n ? tr.X[(m + 1) * n + k + 1] : 0.0;
            if (k + 1 < n)
              tele[tid] = std::max(tele[tid], std::abs(tr.X[(m + 1) * n + k] - next - integral[k]));
          }
        }

        const auto J = path_utilities(tr, agg, R);
        double mu_int = 0.0;
        for (std::size_t m = 0; m < tr.steps; ++m) mu_int += agg.mu(0, std::span<const double>(&tr.a[m * n], n)) * tr.dt;
        std::copy(R.begin(), R.end(), batch.R.begin() + static_cast<std::ptrdiff_t>(p * n));
        std::copy(J.begin(), J.end(), batch.J.begin() + static_cast<std::ptrdiff_t>(p * (n + 1)));
        batch.aggregate[p] = mu_int + R[0];
        batch.W_T[p] = WT;
        batch.leaked[p] = sc.leaked ? 1 : 0;
        if (p < batch.records.size()) batch.records[p] = tr;
      }
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  };

  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  batch.max_telescoping_error = *std::max_element(tele.begin(), tele.end());
  batch.max_ledger_mismatch = *std::max_element(mismatch.begin(), mismatch.end());
  const auto leaks = std::count(batch.leaked.begin(), batch.leaked.end(), std::uint8_t{1});
  batch.leakage_fraction = static_cast<double>(leaks) / static_cast<double>(cfg.n_paths);
  if (batch.leakage_fraction > 0.01) {
    std::ostringstream os;
    os << "boundary leakage: " << batch.leakage_fraction * 100.0
       << "% of paths left the value-function grid; widen w_min/w_max";
    batch.warnings.push_back({"boundary_leakage", os.str(), batch.leakage_fraction});
  }
  return batch;
}

Estimate estimate_strided(std::span<const double> xs, std::size_t stride, std::size_t offset) {
  Estimate e;
  const std::size_t n = stride == 0 ? 0 : (xs.size() > offset ? (xs.size() - offset + stride - 1) / stride : 0);
  if (n == 0) return e;
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = offset; i < xs.size(); i += stride) {
    ++count;
    const double d = xs[i] - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (xs[i] - mean);
  }
  e.mean = mean;
  e.se = count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count)) : 0.0;
  return e;
}

Estimate estimate(std::span<const double> xs) { return estimate_strided(xs, 1, 0); }

UtilityReport realized_utilities(const PathBatch& batch) {
  UtilityReport r;
  for (std::size_t k = 0; k <= batch.players; ++k) r.J.push_back(estimate_strided(batch.J, batch.players + 1, k));
  r.aggregate = estimate(batch.aggregate);
  r.W_T = estimate(batch.W_T);
  return r;
}

std::vector<ContinuationPoint> continuation_check(const AggregateContract& agg, const FeedbackPolicy& policy,
                                                  const SimulationConfig& cfg, std::span<const double> time_fractions,
                                                  std::size_t n_inner) {
  cfg.validate();
  if (n_inner < 2) throw validation_error("continuation check: need at least two inner paths");
  const std::size_t n = agg.size();
  const EffortRule none;
  Context ctx{agg, policy, cfg, none, n, agg.spec.horizon / static_cast<double>(cfg.n_steps), agg.spec.sigma,
              policy.w_range()};

  Trajectory outer, inner;
  PathScratch sc;
  std::mt19937_64 rng(path_seed(cfg.seed, 0));
  run_path(ctx, agg.w_star[0], 0, cfg.n_steps, rng, outer, sc, {});

  std::vector<ContinuationPoint> out;
  for (std::size_t q = 0; q < time_fractions.size(); ++q) {
    const double f = time_fractions[q];
    const auto m = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(f * static_cast<double>(cfg.n_steps))),
                                           1, cfg.n_steps - 1);
    const auto prefix = ledger_range(outer, agg, agg.w_star, cfg.payment_sign, 0, m);
    ContinuationPoint cp;
    cp.t = static_cast<double>(m) * ctx.dt;
    cp.W = outer.W[m];
    std::vector<double> samples(n_inner);
    for (std::size_t i = 0; i < n_inner; ++i) {
      std::mt19937_64 r(path_seed(cfg.seed ^ splitmix64(q + 1), i));
      run_path(ctx, cp.W, m, cfg.n_steps - m, r, inner, sc, {});
      const auto R = ledger_range(inner, agg, prefix, cfg.payment_sign, 0, inner.steps);
      double mu_int = 0.0;
      for (std::size_t s = 0; s < inner.steps; ++s)
        mu_int += agg.mu(0, std::span<const double>(&inner.a[s * n], n)) * inner.dt;
      samples[i] = mu_int + R[0];
    }
    cp.conditional = estimate(samples);
    out.push_back(cp);
  }
  return out;
}

}  // namespace hc
