#include "hc/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hc {

namespace {

// Cell index and weight for x on a uniform grid, clamped.
struct Locate {
  std::size_t i = 0;
  double w = 0.0;
  bool clamped = false;
};

Locate locate(const std::vector<double>& nodes, double x) {
  Locate out;
  const std::size_t n = nodes.size();
  if (n == 1) {
    out.clamped = x != nodes[0];
    return out;
  }
  const double lo = nodes.front(), hi = nodes.back();
  if (x <= lo) {
    out.clamped = x < lo;
    return out;
  }
  if (x >= hi) {
    out.clamped = x > hi;
    out.i = n - 2;
    out.w = 1.0;
    return out;
  }
  const double h = (hi - lo) / static_cast<double>(n - 1);
  std::size_t i = std::min(static_cast<std::size_t>((x - lo) / h), n - 2);
  if (x < nodes[i]) --i;
  if (x > nodes[i + 1]) ++i;
  out.i = std::min(i, n - 2);
  out.w = (x - nodes[out.i]) / (nodes[out.i + 1] - nodes[out.i]);
  return out;
}

double generator(const ControlTable& t, std::size_t j, double dv_fwd, double dv_bwd, double v_ww, double half_s2,
                 double& y) {
  y = best_sensitivity(t.y_lo[j], t.y_hi[j], v_ww);
  const double b = t.drift[j];
  return t.s[j] + b * (b >= 0.0 ? dv_fwd : dv_bwd) + half_s2 * y * y * v_ww;
}

}  // namespace

double ControlTable::y_abs_max() const {
  double m = 0.0;
  for (std::size_t j = 0; j < size(); ++j) m = std::max({m, std::abs(y_lo[j]), std::abs(y_hi[j])});
  return m;
}

double ControlTable::drift_abs_max() const {
  double m = 0.0;
  for (double b : drift) m = std::max(m, std::abs(b));
  return m;
}

ControlTable build_control_table(const AggregateContract& agg, std::optional<Interval> domain) {
  if (agg.levels.empty()) throw validation_error("control table: aggregate contract is empty");
  const auto& psi = agg.psi1();
  const auto& phi = agg.phi1_hat();
  ControlTable t;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (!psi.valid(i)) continue;
    const double s = psi.y_nodes()[i];
    if (domain && !domain->contains(s, 1e-12)) continue;
    t.s.push_back(s);
    t.drift.push_back(-agg.mu(0, psi.point(i)));
    t.y_lo.push_back(phi.right_slope[i]);
    t.y_hi.push_back(phi.left_slope[i]);
    t.node.push_back(i);
  }
  if (t.size() == 0) throw validation_error("control table: no admissible total effort in the control domain");
  return t;
}

double best_sensitivity(double lo, double hi, double curvature) {
  if (curvature > 0.0) return std::abs(hi) >= std::abs(lo) ? hi : lo;
  if (lo <= 0.0 && hi >= 0.0) return 0.0;
  return std::abs(lo) <= std::abs(hi) ? lo : hi;
}

HamiltonianValue hamiltonian(const ControlTable& table, double dv_fwd, double dv_bwd, double v_ww, double sigma,
                             ControlSearch search, std::size_t coarse_points) {
  const std::size_t n = table.size();
  const double half_s2 = 0.5 * sigma * sigma;
  HamiltonianValue best;
  best.value = kNegInf;
  double y = 0.0;
  auto consider = [&](std::size_t j) {
    const double g = generator(table, j, dv_fwd, dv_bwd, v_ww, half_s2, y);
    if (g > best.value) {
      best.value = g;
      best.index = j;
      best.y_star = y;
    }
  };

  if (search == ControlSearch::exhaustive || n <= 2 * coarse_points) {
    for (std::size_t j = 0; j < n; ++j) consider(j);
  } else {
    const std::size_t stride = std::max<std::size_t>(1, n / coarse_points);
    for (std::size_t j = 0; j < n; j += stride) consider(j);
    consider(n - 1);
    const std::size_t c = best.index;
    const std::size_t lo = c >= stride ? c - stride : 0;
    const std::size_t hi = std::min(n - 1, c + stride);
    for (std::size_t j = lo; j <= hi; ++j) consider(j);
  }
  best.s_star = table.s[best.index];
  best.truncated = n > 1 && (best.index == 0 || best.index == n - 1);
  return best;
}

HamiltonianValue hamiltonian(const AggregateContract& agg, double v_w, double v_ww, double sigma,
                             std::optional<Interval> domain, Warnings* warnings) {
  if (!(sigma > 0.0)) throw validation_error("hamiltonian: sigma must be > 0");
  const ControlTable table = build_control_table(agg, domain);
  const HamiltonianValue h = hamiltonian(table, v_w, v_w, v_ww, sigma, ControlSearch::exhaustive);
  if (h.truncated && warnings) {
    std::ostringstream os;
    os << "control truncation: maximizer s* = " << h.s_star << " on the boundary of the control set";
    warnings->push_back({"control_truncation", os.str(), h.s_star});
  }
  return h;
}

StencilWeights stencil_weights(double drift, double y, double sigma, double dw, double dt) {
  const double diff = 0.5 * sigma * sigma * y * y * dt / (dw * dw);
  const double adv = std::abs(drift) * dt / dw;
  StencilWeights w;
  w.left = diff + (drift < 0.0 ? adv : 0.0);
  w.right = diff + (drift >= 0.0 ? adv : 0.0);
  w.center = 1.0 - 2.0 * diff - adv;
  return w;
}

void HjbGrid::validate() const {
  if (!(w_min < w_max)) throw validation_error("grid.w_min/w_max: need w_min < w_max");
  if (w_nodes < 3) throw validation_error("grid.w_nodes: must be >= 3");
  if (time_layers < 1) throw validation_error("grid.time_layers: must be >= 1");
  if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) throw validation_error("grid.cfl_safety: must be in (0, 1]");
  if (coarse_points < 2) throw validation_error("grid.coarse_points: must be >= 2");
}

double ValueFunction::value(double w, double t) const {
  const Locate lw = locate(w_nodes, w);
  const Locate lt = locate(t_nodes, t);
  auto row = [&](std::size_t ti) {
    if (nw() == 1) return v[at(ti, 0)];
    return (1.0 - lw.w) * v[at(ti, lw.i)] + lw.w * v[at(ti, lw.i + 1)];
  };
  if (nt() == 1) return row(0);
  return (1.0 - lt.w) * row(lt.i) + lt.w * row(lt.i + 1);
}

ValueFunction solve_hjb(const AggregateContract& agg, const HjbGrid& grid) {
  grid.validate();
  if (agg.levels.empty()) throw validation_error("solve_hjb: aggregate contract is empty");
  const double sigma = agg.spec.sigma;
  const double T = agg.spec.horizon;
  const ControlTable table = build_control_table(agg, grid.control_domain);

  ValueFunction vf;
  vf.w_nodes = linspace(grid.w_min, grid.w_max, grid.w_nodes);
  const std::size_t nw = grid.w_nodes;
  const double dw = grid.dw();
  const std::size_t layers = T > 0.0 ? grid.time_layers : 0;
  vf.t_nodes = layers > 0 ? linspace(0.0, T, layers + 1) : std::vector<double>{0.0};
  const std::size_t nt = vf.t_nodes.size();
  vf.v.assign(nt * nw, 0.0);
  vf.s_star.assign(nt * nw, 0.0);
  vf.y_star.assign(nt * nw, 0.0);

  for (std::size_t i = 0; i < nw; ++i) vf.v[vf.at(nt - 1, i)] = agg.spec.terminal(vf.w_nodes[i]);

  std::size_t truncations = 0;
  auto record_policy = [&](std::size_t layer, const std::vector<double>& v) {
    for (std::size_t i = 1; i + 1 < nw; ++i) {
      const double fwd = (v[i + 1] - v[i]) / dw;
      const double bwd = (v[i] - v[i - 1]) / dw;
      const double vww = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dw * dw);
      const auto h = hamiltonian(table, fwd, bwd, vww, sigma, grid.search, grid.coarse_points);
      vf.s_star[vf.at(layer, i)] = h.s_star;
      vf.y_star[vf.at(layer, i)] = h.y_star;
      if (h.truncated) ++truncations;
    }
    for (std::size_t e : {std::size_t{0}, nw - 1}) {
      const std::size_t src = e == 0 ? 1 : nw - 2;
      vf.s_star[vf.at(layer, e)] = vf.s_star[vf.at(layer, src)];
      vf.y_star[vf.at(layer, e)] = vf.y_star[vf.at(layer, src)];
    }
  };

  if (layers == 0) {
    record_policy(0, vf.v);
    return vf;
  }

  const double dt_layer = T / static_cast<double>(layers);
  // The step comes from the unrestricted control set so that schemes with
  // nested control domains share one time grid.
  const ControlTable full = grid.control_domain ? build_control_table(agg) : table;
  const double ymax = full.y_abs_max();
  const double rate = sigma * sigma * ymax * ymax / (dw * dw) + full.drift_abs_max() / dw;
  std::size_t sub = 1;
  if (rate > 0.0) sub = static_cast<std::size_t>(std::ceil(dt_layer * rate / grid.cfl_safety));
  sub = std::max<std::size_t>(sub, 1);
  if (sub > grid.max_total_substeps / layers) {
    std::ostringstream os;
    os << "solve_hjb: CFL condition needs " << sub * layers << " time steps, above the cap of "
       << grid.max_total_substeps << "; coarsen w or restrict the control domain";
    throw numerical_error(os.str());
  }
  vf.substeps_per_layer = sub;
  const double dt = dt_layer / static_cast<double>(sub);
  const double half_s2 = 0.5 * sigma * sigma;

  std::vector<double> cur(vf.v.begin() + static_cast<std::ptrdiff_t>((nt - 1) * nw), vf.v.end());
  std::vector<double> next(nw);
  for (std::size_t layer = nt - 1; layer-- > 0;) {
    for (std::size_t k = 0; k < sub; ++k) {
      const bool last = k + 1 == sub;
      if (last) record_policy(layer, cur);
      for (std::size_t i = 1; i + 1 < nw; ++i) {
        const double fwd = (cur[i + 1] - cur[i]) / dw;
        const double bwd = (cur[i] - cur[i - 1]) / dw;
        const double vww = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) / (dw * dw);
        double h;
        if (last) {
          // Same control as the one just recorded.
          const std::size_t idx = vf.at(layer, i);
          const auto it = std::lower_bound(table.s.begin(), table.s.end(), vf.s_star[idx]);
          const std::size_t j = static_cast<std::size_t>(it - table.s.begin());
          const double b = table.drift[j];
          const double y = vf.y_star[idx];
          h = table.s[j] + b * (b >= 0.0 ? fwd : bwd) + half_s2 * y * y * vww;
        } else {
          h = hamiltonian(table, fwd, bwd, vww, sigma, grid.search, grid.coarse_points).value;
        }
        next[i] = cur[i] + dt * h;
      }
      next[0] = 2.0 * next[1] - next[2];
      next[nw - 1] = 2.0 * next[nw - 2] - next[nw - 3];
      cur.swap(next);
    }
    for (std::size_t i = 0; i < nw; ++i) {
      if (!std::isfinite(cur[i])) {
        std::ostringstream os;
        os << "solve_hjb: non-finite value at time layer " << layer << " (t = " << vf.t_nodes[layer] << ")";
        throw numerical_error(os.str());
      }
      vf.v[vf.at(layer, i)] = cur[i];
    }
  }
  for (std::size_t i = 0; i < nw; ++i) {
    vf.s_star[vf.at(nt - 1, i)] = vf.s_star[vf.at(nt - 2, i)];
    vf.y_star[vf.at(nt - 1, i)] = vf.y_star[vf.at(nt - 2, i)];
  }
  if (truncations > 0) {
    std::ostringstream os;
    os << "control truncation: " << truncations << " policy nodes chose a boundary control";
    vf.warnings.push_back({"control_truncation", os.str(), static_cast<double>(truncations)});
  }
  return vf;
}

FeedbackPolicy::FeedbackPolicy(const ValueFunction& vf, const AggregateContract& agg)
    : w_nodes_(vf.w_nodes), t_nodes_(vf.t_nodes), s_(vf.s_star), y_(vf.y_star), phi_(agg.phi1_hat()),
      psi_(agg.psi1()) {}

void FeedbackPolicy::query(double w, double t, PolicyPoint& out) const {
  const Locate lw = locate(w_nodes_, w);
  const Locate lt = locate(t_nodes_, t);
  const std::size_t nw = w_nodes_.size();
  auto bilinear = [&](const std::vector<double>& f) {
    auto row = [&](std::size_t ti) {
      return (1.0 - lw.w) * f[ti * nw + lw.i] + lw.w * f[ti * nw + lw.i + 1];
    };
    if (t_nodes_.size() == 1) return row(0);
    return (1.0 - lt.w) * row(lt.i) + lt.w * row(lt.i + 1);
  };
  double s = bilinear(s_);
  if (!psi_.feasible(s)) s = psi_.y_nodes()[psi_.nearest_valid(s)];
  out.a.resize(psi_.dim());
  if (!psi_.evaluate(s, out.a)) throw internal_error("policy: snapped total effort is not parametrized");
  const double sum = std::accumulate(out.a.begin(), out.a.end(), 0.0);
  out.a[0] += s - sum;
  out.s = s;
  out.y = supergradient(phi_, s).clamp(bilinear(y_));
  out.clamped = lw.clamped || lt.clamped;
}

PolicyPoint FeedbackPolicy::operator()(double w, double t) const {
  PolicyPoint p;
  query(w, t, p);
  return p;
}

FeedbackPolicy extract_policy(const ValueFunction& vf, const AggregateContract& agg) {
  if (vf.v.empty()) throw validation_error("extract_policy: value function is empty");
  return FeedbackPolicy(vf, agg);
}

}  // namespace hc
