#include "hc/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hc/golden.hpp"

namespace hc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double chord_value(double x0, double y0, double x1, double y1, double x) {
  return y0 + (x - x0) * ((y1 - y0) / (x1 - x0));
}

}  // namespace

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2) return {lo};
  std::vector<double> out(n);
  const double span = hi - lo;
  for (std::size_t i = 0; i < n; ++i)
    out[i] = lo + span * static_cast<double>(i) / static_cast<double>(n - 1);
  out.back() = hi;
  return out;
}

void GridFunction::validate() const {
  if (nodes.size() != values.size())
    throw validation_error("grid function: nodes and values differ in length");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!std::isfinite(nodes[i])) throw validation_error("grid function: non-finite node");
    if (i > 0 && !(nodes[i] > nodes[i - 1]))
      throw validation_error("grid function: nodes must be strictly increasing");
    if (std::isnan(values[i]) || values[i] == std::numeric_limits<double>::infinity())
      throw validation_error("grid function: values must be finite or -inf");
  }
}

std::size_t ConcavePiecewise::segment(double y) const {
  if (nodes.size() < 2) return 0;
  auto it = std::upper_bound(nodes.begin(), nodes.end(), y);
  std::size_t i = it == nodes.begin() ? 0 : static_cast<std::size_t>(it - nodes.begin()) - 1;
  return std::min(i, nodes.size() - 2);
}

double ConcavePiecewise::operator()(double y) const {
  const double tol = 1e-12 * (1.0 + std::abs(nodes.front()) + std::abs(nodes.back()));
  if (y < nodes.front() - tol || y > nodes.back() + tol) {
    std::ostringstream os;
    os << "out of domain: y = " << y << " outside [" << nodes.front() << ", " << nodes.back() << "]";
    throw domain_error(os.str());
  }
  const std::size_t i = segment(y);
  if (y <= nodes[i]) return values[i];
  if (y >= nodes[i + 1]) return values[i + 1];
  return chord_value(nodes[i], values[i], nodes[i + 1], values[i + 1], y);
}

ConcavePiecewise concave_envelope_1d(const GridFunction& g) {
  g.validate();
  std::vector<std::size_t> finite;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::isfinite(g.values[i])) finite.push_back(i);
  if (finite.size() < 2) throw validation_error("degenerate grid: fewer than 2 finite nodes");

  // Upper hull by a monotone-chain sweep; collinear points are dropped from
  // the vertex list but still touch.
  std::vector<std::size_t> hull;
  hull.reserve(finite.size());
  for (std::size_t idx : finite) {
    const double rx = g.nodes[idx], ry = g.values[idx];
    while (hull.size() >= 2) {
      const std::size_t p = hull[hull.size() - 2], q = hull.back();
      const double cross = (g.nodes[q] - g.nodes[p]) * (ry - g.values[p]) -
                           (g.values[q] - g.values[p]) * (rx - g.nodes[p]);
      if (cross >= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(idx);
  }

  const std::size_t first = finite.front(), last = finite.back();
  ConcavePiecewise env;
  const std::size_t n = last - first + 1;
  env.nodes.assign(g.nodes.begin() + static_cast<std::ptrdiff_t>(first),
                   g.nodes.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  env.values.resize(n);
  env.left_slope.resize(n);
  env.right_slope.resize(n);
  env.touching.assign(n, 0);

  std::vector<double> seg_slope(hull.size() - 1);
  for (std::size_t s = 0; s + 1 < hull.size(); ++s)
    seg_slope[s] = (g.values[hull[s + 1]] - g.values[hull[s]]) / (g.nodes[hull[s + 1]] - g.nodes[hull[s]]);

  std::size_t s = 0;
  for (std::size_t idx = first; idx <= last; ++idx) {
    const std::size_t i = idx - first;
    while (s + 1 < hull.size() - 1 && idx > hull[s + 1]) ++s;
    const std::size_t a = hull[s], b = hull[s + 1];
    if (idx == a) {
      env.values[i] = g.values[a];
      env.right_slope[i] = seg_slope[s];
      env.left_slope[i] = s == 0 ? seg_slope[s] : seg_slope[s - 1];
    } else if (idx == b) {
      env.values[i] = g.values[b];
      env.left_slope[i] = seg_slope[s];
      env.right_slope[i] = s + 1 < seg_slope.size() ? seg_slope[s + 1] : seg_slope[s];
    } else {
      env.values[i] = chord_value(g.nodes[a], g.values[a], g.nodes[b], g.values[b], g.nodes[idx]);
      env.left_slope[i] = env.right_slope[i] = seg_slope[s];
    }
    const double gv = g.values[idx];
    env.touching[i] = std::isfinite(gv) && std::abs(env.values[i] - gv) <= 1e-10 * (1.0 + std::abs(gv));
  }
  return env;
}

SlopeInterval supergradient(const ConcavePiecewise& env, double y) {
  const double span = env.nodes.back() - env.nodes.front();
  const double tol = 1e-12 * (1.0 + std::abs(env.nodes.front()) + std::abs(env.nodes.back()));
  if (y < env.nodes.front() - tol || y > env.nodes.back() + tol) {
    std::ostringstream os;
    os << "out of domain: supergradient requested at y = " << y << " outside [" << env.nodes.front() << ", "
       << env.nodes.back() << "]";
    throw domain_error(os.str());
  }
  const std::size_t i = env.segment(y);
  const double snap = 1e-10 * span / static_cast<double>(env.size());
  if (std::abs(y - env.nodes[i]) <= snap) return {env.right_slope[i], env.left_slope[i]};
  if (std::abs(y - env.nodes[i + 1]) <= snap) return {env.right_slope[i + 1], env.left_slope[i + 1]};
  return {env.right_slope[i], env.right_slope[i]};
}

EffortParametrization::EffortParametrization(std::vector<double> y_nodes, std::size_t dim, std::vector<double> coords,
                                             std::vector<std::uint8_t> valid)
    : y_nodes_(std::move(y_nodes)), dim_(dim), coords_(std::move(coords)), valid_(std::move(valid)) {
  if (y_nodes_.empty()) throw validation_error("effort parametrization: no nodes");
  if (coords_.size() != y_nodes_.size() * dim_)
    throw validation_error("effort parametrization: coordinate block has the wrong size");
  if (valid_.empty()) valid_.assign(y_nodes_.size(), 1);
  if (valid_.size() != y_nodes_.size()) throw validation_error("effort parametrization: mask has the wrong size");
  for (std::size_t i = 1; i < y_nodes_.size(); ++i)
    if (!(y_nodes_[i] > y_nodes_[i - 1]))
      throw validation_error("effort parametrization: nodes must be strictly increasing");
  if (y_nodes_.size() >= 2) {
    step_ = (y_nodes_.back() - y_nodes_.front()) / static_cast<double>(y_nodes_.size() - 1);
    uniform_ = true;
    for (std::size_t i = 0; i < y_nodes_.size() && uniform_; ++i) {
      const double expect = y_nodes_.front() + step_ * static_cast<double>(i);
      uniform_ = std::abs(y_nodes_[i] - expect) <= 1e-9 * step_;
    }
  }
}

EffortParametrization EffortParametrization::empty() { return EffortParametrization({0.0}, 0, {}, {1}); }

EffortParametrization EffortParametrization::identity(std::vector<double> y_nodes, std::vector<std::uint8_t> valid) {
  std::vector<double> coords = y_nodes;
  return EffortParametrization(std::move(y_nodes), 1, std::move(coords), std::move(valid));
}

std::pair<std::size_t, std::size_t> EffortParametrization::bracket(double y) const {
  const std::size_t n = y_nodes_.size();
  if (n == 1) return {0, 0};
  std::size_t i;
  if (uniform_) {
    const double f = std::floor((y - y_nodes_.front()) / step_);
    i = f <= 0.0 ? 0 : std::min(static_cast<std::size_t>(f), n - 2);
  } else {
    auto it = std::upper_bound(y_nodes_.begin(), y_nodes_.end(), y);
    i = it == y_nodes_.begin() ? 0 : std::min(static_cast<std::size_t>(it - y_nodes_.begin()) - 1, n - 2);
  }
  const double snap = 1e-10 * (y_nodes_[i + 1] - y_nodes_[i]);
  if (std::abs(y - y_nodes_[i]) <= snap) return {i, i};
  if (std::abs(y - y_nodes_[i + 1]) <= snap) return {i + 1, i + 1};
  return {i, i + 1};
}

bool EffortParametrization::evaluate(double y, std::span<double> out) const {
  if (y_nodes_.size() == 1) {
    if (std::abs(y - y_nodes_[0]) > 1e-12 * (1.0 + std::abs(y_nodes_[0])) || !valid_[0]) return false;
    std::copy_n(coords_.begin(), dim_, out.begin());
    return true;
  }
  const double snap = 1e-10 * (y_nodes_.back() - y_nodes_.front()) / static_cast<double>(y_nodes_.size());
  if (y < y_nodes_.front() - snap || y > y_nodes_.back() + snap) return false;
  const auto [i, k] = bracket(y);
  if (!valid_[i] || !valid_[k]) return false;
  const double* p = coords_.data() + i * dim_;
  if (i == k) {
    std::copy_n(p, dim_, out.begin());
    return true;
  }
  const double* q = coords_.data() + k * dim_;
  const double w = (y - y_nodes_[i]) / (y_nodes_[k] - y_nodes_[i]);
  for (std::size_t d = 0; d < dim_; ++d) out[d] = p[d] + w * (q[d] - p[d]);
  return true;
}

bool EffortParametrization::feasible(double y) const {
  std::vector<double> scratch(dim_);
  return evaluate(y, scratch);
}

std::size_t EffortParametrization::nearest_valid(double y) const {
  std::size_t best = y_nodes_.size();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < y_nodes_.size(); ++i) {
    if (!valid_[i]) continue;
    const double d = std::abs(y_nodes_[i] - y);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best == y_nodes_.size()) throw domain_error("effort parametrization has no valid node");
  return best;
}

namespace {

struct Candidate {
  double z;
  double v;
};

// Index range [first, last] of the run of near-maximal values around `best`.
std::pair<std::size_t, std::size_t> plateau_run(const std::vector<Candidate>& c, std::size_t best, double tol) {
  const double floor_v = c[best].v - tol * (1.0 + std::abs(c[best].v));
  std::size_t first = best, last = best;
  while (first > 0 && c[first - 1].v >= floor_v) --first;
  while (last + 1 < c.size() && c[last + 1].v >= floor_v) ++last;
  return {first, last};
}

void add_truncation_warnings(FiberReduction& out) {
  const auto& y = out.inner.nodes;
  const double center = 0.5 * (y.front() + y.back());
  std::size_t i = 0;
  while (i < y.size()) {
    if (!out.truncated[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < y.size() && out.truncated[j + 1]) ++j;
    const double at = std::abs(y[i] - center) < std::abs(y[j] - center) ? y[i] : y[j];
    std::ostringstream os;
    os << "truncation hit: inner maximizer on the searched boundary for y in [" << y[i] << ", " << y[j]
       << "]; widen the effort domain if this range matters";
    out.warnings.push_back({"truncation_hit", os.str(), at});
    i = j + 1;
  }
}

}  // namespace

FiberReduction reduce_fiber_argmax(const FiberObjective& g, const EffortParametrization& psi,
                                   std::span<const double> y_grid, const FiberOptions& opt) {
  if (y_grid.empty()) throw validation_error("fiber reduction: empty y grid");
  if (opt.coarse_points < 3) throw validation_error("fiber reduction: coarse_points must be >= 3");
  const std::size_t n = y_grid.size();
  const std::size_t d = psi.dim();
  const std::size_t stride = d + 1;

  FiberReduction out;
  out.inner.nodes.assign(y_grid.begin(), y_grid.end());
  out.inner.values.assign(n, kNaN);
  out.value.nodes = out.inner.nodes;
  out.value.values.assign(n, kNegInf);
  out.points.assign(n * stride, kNaN);
  out.truncated.assign(n, 0);

  const auto mask = psi.valid_mask();
  const bool all_valid = std::all_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; });
  const Interval own = opt.own_domain;
  const Interval psi_dom = psi.domain();

  std::vector<double> tail(d);
  auto h = [&](double y, double z) -> double {
    if (!psi.evaluate(y - z, tail)) return kNegInf;
    return g(z, tail);
  };

  std::size_t nonconcave = 0, plateaus = 0;
  double first_nonconcave = kNaN, first_plateau = kNaN;
  std::vector<Candidate> cand;

  for (std::size_t j = 0; j < n; ++j) {
    const double y = y_grid[j];
    double* pt = out.points.data() + j * stride;

    if (d == 0) {
      if (!own.contains(y, 1e-12 * (1.0 + std::abs(y)))) continue;
      out.inner.values[j] = y;
      out.value.values[j] = g(y, {});
      pt[0] = y;
      continue;
    }

    double a = std::max(own.lo, y - psi_dom.hi);
    double b = std::min(own.hi, y - psi_dom.lo);
    const double width_tol = 1e-12 * (1.0 + std::abs(y));
    if (a > b + width_tol) continue;
    if (a > b) a = b = 0.5 * (a + b);

    double best_z = kNaN, best_v = kNegInf;
    bool plateau = false;
    bool use_global = !all_valid;

    if (!use_global) {
      const int m = b - a > width_tol ? opt.coarse_points : 1;
      cand.clear();
      for (int i = 0; i < m; ++i) {
        const double z = m == 1 ? a : (i == m - 1 ? b : a + (b - a) * i / (m - 1));
        cand.push_back({z, h(y, z)});
      }
      std::size_t ib = 0;
      for (std::size_t i = 1; i < cand.size(); ++i)
        if (cand[i].v > cand[ib].v) ib = i;
      const double utol = 1e-12 * (1.0 + std::abs(cand[ib].v));
      bool unimodal = std::isfinite(cand[ib].v);
      for (std::size_t i = 0; i + 1 < cand.size() && unimodal; ++i) {
        if (i < ib && cand[i + 1].v < cand[i].v - utol) unimodal = false;
        if (i >= ib && cand[i + 1].v > cand[i].v + utol) unimodal = false;
      }
      if (!unimodal) {
        use_global = true;
        if (nonconcave++ == 0) first_nonconcave = y;
      } else {
        const auto [p0, p1] = plateau_run(cand, ib, opt.plateau_tol);
        if (p1 - p0 >= 2) {
          plateau = true;
          best_z = 0.5 * (cand[p0].z + cand[p1].z);
          best_v = h(y, best_z);
        } else if (cand.size() == 1) {
          best_z = cand[0].z;
          best_v = cand[0].v;
        } else {
          const double lo = cand[ib == 0 ? 0 : ib - 1].z;
          const double hi = cand[std::min(ib + 1, cand.size() - 1)].z;
          const auto r = golden_section_maximize([&](double z) { return h(y, z); }, lo, hi, opt.z_tol);
          best_z = r.x;
          best_v = r.value;
          if (cand[ib].v > best_v) {
            best_z = cand[ib].z;
            best_v = cand[ib].v;
          }
        }
      }
    }

    if (use_global) {
      // Scan every z that puts y - z on a valid node of psi, plus the
      // ends of the searched range.
      cand.clear();
      const auto ys = psi.y_nodes();
      for (std::size_t k = 0; k < ys.size(); ++k) {
        if (!psi.valid(k)) continue;
        const double z = y - ys[k];
        if (z < a - width_tol || z > b + width_tol) continue;
        cand.push_back({own.clamp(z), 0.0});
      }
      cand.push_back({a, 0.0});
      cand.push_back({b, 0.0});
      std::sort(cand.begin(), cand.end(), [](const Candidate& l, const Candidate& r) { return l.z < r.z; });
      cand.erase(std::unique(cand.begin(), cand.end(),
                             [&](const Candidate& l, const Candidate& r) { return r.z - l.z <= width_tol; }),
                 cand.end());
      for (auto& c : cand) c.v = h(y, c.z);
      std::size_t ib = 0;
      for (std::size_t i = 1; i < cand.size(); ++i)
        if (cand[i].v > cand[ib].v) ib = i;
      if (!std::isfinite(cand[ib].v)) continue;
      const auto [p0, p1] = plateau_run(cand, ib, opt.plateau_tol);
      if (p1 - p0 >= 2 && std::isfinite(h(y, 0.5 * (cand[p0].z + cand[p1].z)))) {
        plateau = true;
        best_z = 0.5 * (cand[p0].z + cand[p1].z);
        best_v = h(y, best_z);
      } else {
        double lo = cand[ib].z, hi = cand[ib].z;
        if (ib > 0 && std::isfinite(h(y, 0.5 * (cand[ib - 1].z + cand[ib].z)))) lo = cand[ib - 1].z;
        if (ib + 1 < cand.size() && std::isfinite(h(y, 0.5 * (cand[ib].z + cand[ib + 1].z)))) hi = cand[ib + 1].z;
        best_z = cand[ib].z;
        best_v = cand[ib].v;
        if (hi > lo) {
          const auto r = golden_section_maximize([&](double z) { return h(y, z); }, lo, hi, opt.z_tol);
          if (r.value > best_v) {
            best_z = r.x;
            best_v = r.value;
          }
        }
      }
    }

    if (!std::isfinite(best_v)) continue;
    if (plateau && plateaus++ == 0) first_plateau = y;

    if (!psi.evaluate(y - best_z, tail)) continue;
    const double tail_sum = std::accumulate(tail.begin(), tail.end(), 0.0);
    const double inner = best_z + (y - (best_z + tail_sum));
    out.inner.values[j] = inner;
    out.value.values[j] = best_v;
    pt[0] = inner;
    std::copy(tail.begin(), tail.end(), pt + 1);
    const double edge_tol = 1e-8 * (1.0 + (b - a));
    out.truncated[j] = (best_z - a <= edge_tol || b - best_z <= edge_tol) ? 1 : 0;
  }

  if (nonconcave > 0) {
    std::ostringstream os;
    os << "fiber objective not concave in the inner effort on " << nonconcave
       << " nodes; used a global scan for the maximizer";
    out.warnings.push_back({"nonconcave_fiber", os.str(), first_nonconcave});
  }
  if (plateaus > 0) {
    std::ostringstream os;
    os << "flat maximizer plateau on " << plateaus << " nodes; selected the plateau midpoint";
    out.warnings.push_back({"plateau", os.str(), first_plateau});
  }
  add_truncation_warnings(out);
  return out;
}

FGammaEnvelope fgamma_envelope(const FiberObjective& g, const EffortParametrization& psi,
                               std::span<const double> y_grid, const FiberOptions& opt) {
  FGammaEnvelope out;
  out.fiber = reduce_fiber_argmax(g, psi, y_grid, opt);
  out.envelope = concave_envelope_1d(out.fiber.value);
  out.warnings = out.fiber.warnings;

  const auto& ys = out.fiber.value.nodes;
  out.offset = static_cast<std::size_t>(std::lower_bound(ys.begin(), ys.end(), out.envelope.nodes.front()) - ys.begin());

  const std::size_t stride = psi.dim() + 1;
  const std::size_t n = out.envelope.size();
  std::vector<double> coords(n * stride);
  std::vector<std::uint8_t> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = out.offset + i;
    std::copy_n(out.fiber.points.data() + j * stride, stride, coords.data() + i * stride);
    valid[i] = out.envelope.touching[i] && std::isfinite(out.fiber.value.values[j]) ? 1 : 0;
  }
  out.psi = EffortParametrization(out.envelope.nodes, stride, std::move(coords), std::move(valid));
  return out;
}

}  // namespace hc
