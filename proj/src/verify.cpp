#include "hc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace hc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double check_inside(const Interval& dom, double a, const std::string& what) {
  if (!dom.contains(a, 1e-12)) {
    std::ostringstream os;
    os << "deviation " << what << ": effort " << a << " outside the domain [" << dom.lo << ", " << dom.hi << "]";
    throw validation_error(os.str());
  }
  return dom.clamp(a);
}

}  // namespace

std::string DeviationStrategy::name() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::suggested: os << "suggested"; break;
    case Kind::zero_effort: os << "zero_effort"; break;
    case Kind::scale: os << "scale(" << param << ")"; break;
    case Kind::constant: os << "constant(" << param << ")"; break;
    case Kind::off_touching: os << "off_touching(" << param << ")"; break;
  }
  if (player) os << ":player" << *player + 1;
  else os << ":aggregate";
  return os.str();
}

DeviationStrategy DeviationStrategy::parse(const std::string& tag, double param, std::optional<std::size_t> player) {
  DeviationStrategy d;
  d.param = param;
  d.player = player;
  if (tag == "suggested") d.kind = Kind::suggested;
  else if (tag == "zero_effort") d.kind = Kind::zero_effort;
  else if (tag == "scale") d.kind = Kind::scale;
  else if (tag == "constant") d.kind = Kind::constant;
  else if (tag == "off_touching") d.kind = Kind::off_touching;
  else throw validation_error("deviation: unknown kind '" + tag + "'");
  return d;
}

EffortRule deviation_rule(const DeviationStrategy& dev, const AggregateContract& agg) {
  const std::size_t n = agg.size();
  if (dev.player && *dev.player >= n) throw validation_error("deviation: player index out of range");
  std::vector<Interval> doms;
  for (const auto& p : agg.spec.players) doms.push_back(p.effort_domain);
  const std::string label = dev.name();

  using K = DeviationStrategy::Kind;
  if (dev.kind == K::suggested) return {};
  if (dev.kind == K::zero_effort || dev.kind == K::constant) {
    const double target = dev.kind == K::zero_effort ? 0.0 : dev.param;
    for (std::size_t k = 0; k < n; ++k)
      if (!dev.player || *dev.player == k) check_inside(doms[k], target, label);
  }
  if (dev.kind == K::scale && !(dev.param >= 0.0)) throw validation_error("deviation " + label + ": scale must be >= 0");
  if (dev.kind == K::off_touching && !(dev.param > 0.0))
    throw validation_error("deviation " + label + ": perturbation must be > 0");

  return [dev, doms, n](const PolicyPoint&, double, std::span<double> a) {
    auto apply = [&](std::size_t k) {
      switch (dev.kind) {
        case K::zero_effort: a[k] = 0.0; break;
        case K::constant: a[k] = dev.param; break;
        case K::scale: a[k] = doms[k].clamp(dev.param * a[k]); break;
        case K::off_touching: {
          const double up = a[k] + dev.param;
          a[k] = doms[k].contains(up) ? up : doms[k].clamp(a[k] - dev.param);
          break;
        }
        case K::suggested: break;
      }
    };
    if (dev.player) {
      apply(*dev.player);
    } else if (dev.kind == K::off_touching && n > 1) {
      // Shift effort between the first two players: total unchanged, so the
      // profile leaves the touching set.
      const double d = std::min({dev.param, doms[0].hi - a[0], a[1] - doms[1].lo});
      a[0] += d;
      a[1] -= d;
    } else {
      for (std::size_t k = 0; k < n; ++k) apply(k);
    }
  };
}

std::vector<GateResult> check_incentive_compatibility(const AggregateContract& agg, const FeedbackPolicy& policy,
                                                      const DeviationStrategy& dev, const IcOptions& opt) {
  const EffortRule rule = deviation_rule(dev, agg);
  const PathBatch batch = simulate_contract(agg, policy, opt.sim, rule);
  const UtilityReport rep = realized_utilities(batch);
  const std::size_t n = agg.size();

  std::vector<GateResult> out;
  auto gate = [&](const std::string& name, const Estimate& e, double reference, bool two_sided) {
    GateResult g;
    g.name = name;
    g.statistic = e.mean - reference;
    g.se = e.se;
    g.threshold = opt.n_se * e.se + 1e-12 * (1.0 + std::abs(reference));
    g.two_sided = two_sided;
    g.pass = two_sided ? std::abs(g.statistic) <= g.threshold : g.statistic <= g.threshold;
    g.seed = opt.sim.seed;
    out.push_back(g);
  };

  if (dev.kind == DeviationStrategy::Kind::suggested) {
    for (std::size_t k = 0; k < n; ++k) {
      std::ostringstream os;
      os << "ir:player" << k + 1;
      gate(os.str(), rep.J[k + 1], agg.spec.players[k].reservation, true);
    }
    gate("ir:aggregate", rep.aggregate, agg.w_star[0], true);
  } else if (dev.player) {
    gate("ic:" + dev.name(), rep.J[*dev.player + 1], agg.spec.players[*dev.player].reservation, false);
  } else {
    gate("ic:" + dev.name(), rep.aggregate, agg.w_star[0], false);
  }
  return out;
}

std::vector<DeviationStrategy> default_deviations(const AggregateContract& agg) {
  using K = DeviationStrategy::Kind;
  std::vector<DeviationStrategy> out;
  std::vector<std::optional<std::size_t>> targets;
  for (std::size_t k = 0; k < agg.size(); ++k) targets.emplace_back(k);
  targets.emplace_back(std::nullopt);
  for (const auto& who : targets) {
    bool zero_ok = true;
    double mid = 0.0;
    for (std::size_t k = 0; k < agg.size(); ++k) {
      if (who && *who != k) continue;
      const Interval d = agg.spec.players[k].effort_domain;
      zero_ok = zero_ok && d.contains(0.0);
      mid = 0.5 * (d.lo + d.hi);
    }
    if (zero_ok) out.push_back({K::zero_effort, 0.0, who});
    out.push_back({K::scale, 0.5, who});
    out.push_back({K::scale, 1.5, who});
    // A common constant has to fit every deviating player's domain.
    double c = mid;
    for (std::size_t k = 0; k < agg.size(); ++k)
      if (!who || *who == k) c = agg.spec.players[k].effort_domain.clamp(c);
    bool c_ok = true;
    for (std::size_t k = 0; k < agg.size(); ++k)
      if (!who || *who == k) c_ok = c_ok && agg.spec.players[k].effort_domain.contains(c);
    if (c_ok) out.push_back({K::constant, c, who});
  }
  return out;
}

SeparationWitness separating_margin(const AggregateContract& agg, std::size_t level, std::span<const double> a,
                                    double y) {
  if (level >= agg.size()) throw validation_error("separating margin: level out of range");
  if (a.size() != agg.size() - level) throw validation_error("separating margin: effort has the wrong dimension");
  const Level& L = agg.levels[level];
  double s = 0.0;
  for (double x : a) s += x;
  const double mu = agg.mu(level, a);
  SeparationWitness best{std::numeric_limits<double>::infinity(), kNaN};
  for (std::size_t j = 0; j < L.envelope.size(); ++j) {
    if (!std::isfinite(L.fiber[j])) continue;
    const double sp = L.envelope.nodes[j];
    const double m = mu + y * (sp - s) - L.fiber[j];
    if (m < best.margin) best = {m, sp};
  }
  return best;
}

TouchingReport check_touching_necessity(const AggregateContract& agg, std::size_t level, std::size_t n_samples,
                                        std::uint64_t seed) {
  if (level >= agg.size()) throw validation_error("touching necessity: level out of range");
  const Level& L = agg.levels[level];
  TouchingReport rep;
  rep.level = level;

  std::vector<std::size_t> off;
  for (std::size_t i = 0; i < L.envelope.size(); ++i) {
    const double gap = L.envelope.values[i] - L.fiber[i];
    if (std::isfinite(L.fiber[i]) && !L.envelope.touching[i] && gap > 1e-9 * (1.0 + std::abs(L.fiber[i])))
      off.push_back(i);
  }
  if (off.empty()) {
    rep.vacuous = true;
    rep.pass = true;
    return rep;
  }

  const std::size_t dim = agg.size() - level;
  std::mt19937_64 rng(path_seed(seed, level));
  std::uniform_int_distribution<std::size_t> pick(0, off.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> a(dim);
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  while (rep.samples < n_samples) {
    const std::size_t i = off[pick(rng)];
    double s = L.envelope.nodes[i];
    if (dim == 1) {
      // One player: any effort inside a gap segment is off the touching set.
      if (i + 1 < L.envelope.size() && !L.envelope.touching[i + 1])
        s += unit(rng) * (L.envelope.nodes[i + 1] - s);
      a[0] = s;
    } else {
      a[0] = L.inner[i];
      if (!agg.levels[level + 1].psi.evaluate(s - a[0], std::span<double>(a.data() + 1, dim - 1))) continue;
    }
    const double mu = agg.mu(level, a);
    const double y = supergradient(L.envelope, s).midpoint();
    if (!(L.envelope(s) - mu > 1e-9 * (1.0 + std::abs(mu)))) continue;  // landed on the envelope
    ++rep.samples;
    const auto w = separating_margin(agg, level, a, y);
    const double tol = 1e-9 * (1.0 + std::abs(mu));
    if (w.margin < -tol) ++rep.witnesses;
    rep.worst_margin = std::max(rep.worst_margin, w.margin);
    rep.tolerance = std::max(rep.tolerance, tol);
  }
  rep.pass = rep.witnesses == rep.samples;
  return rep;
}

double richardson_order(double v0, double v1, double v2) {
  const double e0 = std::abs(v0 - v1), e1 = std::abs(v1 - v2);
  if (e0 == 0.0 || e1 == 0.0) return kNaN;
  return std::log2(e0 / e1);
}

ConvergenceReport convergence_report(const AggregateContract& agg, const ConvergenceLadders& ladders) {
  if (ladders.w_nodes.size() < 3 || ladders.n_paths.size() < 3 || ladders.n_steps.size() < 3)
    throw validation_error("convergence report: every ladder needs at least three rungs");
  ConvergenceReport rep;
  const double w0 = agg.w_star[0];

  std::vector<double> hv;
  ValueFunction finest;
  for (std::size_t r = 0; r < ladders.w_nodes.size(); ++r) {
    HjbGrid g = ladders.base_grid;
    g.w_nodes = ladders.w_nodes[r];
    finest = solve_hjb(agg, g);
    hv.push_back(finest.value(w0, 0.0));
  }
  for (std::size_t r = 0; r < hv.size(); ++r) {
    HjbGrid g = ladders.base_grid;
    g.w_nodes = ladders.w_nodes[r];
    const double err = r + 1 < hv.size() ? std::abs(hv[r] - hv[r + 1]) : kNaN;
    const double ord = r + 2 < hv.size() ? richardson_order(hv[r], hv[r + 1], hv[r + 2]) : kNaN;
    rep.rows.push_back({"hjb_dw", r, g.dw(), hv[r], err, ord});
  }
  rep.hjb_order = richardson_order(hv[hv.size() - 3], hv[hv.size() - 2], hv.back());

  const FeedbackPolicy policy = extract_policy(finest, agg);
  std::vector<Estimate> mc;
  for (std::size_t r = 0; r < ladders.n_paths.size(); ++r) {
    SimulationConfig cfg;
    cfg.n_paths = ladders.n_paths[r];
    cfg.n_steps = ladders.n_steps.back();
    cfg.seed = ladders.seed;
    mc.push_back(realized_utilities(simulate_contract(agg, policy, cfg)).J[0]);
  }
  rep.mc_scaling_ok = true;
  for (std::size_t r = 0; r < mc.size(); ++r) {
    double ord = kNaN;
    if (r + 1 < mc.size()) {
      const double expected = std::sqrt(static_cast<double>(ladders.n_paths[r + 1]) /
                                        static_cast<double>(ladders.n_paths[r]));
      const double ratio = mc[r].se / mc[r + 1].se;
      ord = ratio / expected;
      rep.mc_scaling_ok = rep.mc_scaling_ok && std::abs(ord - 1.0) <= 0.2;
    }
    rep.rows.push_back({"mc_paths", r, static_cast<double>(ladders.n_paths[r]), mc[r].mean, mc[r].se, ord});
  }

  const std::size_t fine = ladders.n_steps.back();
  std::vector<double> ev;
  for (std::size_t r = 0; r < ladders.n_steps.size(); ++r) {
    if (fine % ladders.n_steps[r] != 0)
      throw validation_error("convergence report: step ladder rungs must divide the finest rung");
    SimulationConfig cfg;
    cfg.n_paths = ladders.euler_paths;
    cfg.n_steps = ladders.n_steps[r];
    cfg.noise_substeps = fine / ladders.n_steps[r];
    cfg.seed = ladders.seed;
    ev.push_back(realized_utilities(simulate_contract(agg, policy, cfg)).J[0].mean);
  }
  rep.euler_monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < ev.size(); ++r) {
    const double diff = r + 1 < ev.size() ? std::abs(ev[r] - ev[r + 1]) : kNaN;
    if (r + 1 < ev.size()) {
      rep.euler_monotone = rep.euler_monotone && diff < prev;
      prev = diff;
    }
    const double ord = r + 2 < ev.size() ? richardson_order(ev[r], ev[r + 1], ev[r + 2]) : kNaN;
    rep.rows.push_back({"euler_dt", r, agg.spec.horizon / static_cast<double>(ladders.n_steps[r]), ev[r], diff, ord});
  }
  return rep;
}

}  // namespace hc
