#include "hc/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hc {

Utility Utility::quadratic(double alpha) {
  Utility u;
  u.kind_ = Kind::quadratic;
  u.params_ = {alpha};
  return u;
}

Utility Utility::power(double coef, double exponent) {
  Utility u;
  u.kind_ = Kind::power;
  u.params_ = {coef, exponent};
  return u;
}

Utility Utility::polynomial(std::vector<double> coeffs) {
  if (coeffs.empty()) throw validation_error("polynomial utility needs at least one coefficient");
  Utility u;
  u.kind_ = Kind::polynomial;
  u.params_ = std::move(coeffs);
  return u;
}

Utility Utility::sampled(GridFunction grid) {
  grid.validate();
  if (grid.size() < 2) throw validation_error("sampled utility needs at least two nodes");
  for (double v : grid.values)
    if (!std::isfinite(v)) throw validation_error("sampled utility values must be finite");
  Utility u;
  u.kind_ = Kind::grid;
  u.grid_ = std::move(grid);
  return u;
}

double Utility::operator()(double a) const {
  switch (kind_) {
    case Kind::quadratic:
      return -0.5 * params_[0] * params_[0] * a * a;
    case Kind::power:
      return -params_[0] * std::pow(std::abs(a), params_[1]);
    case Kind::polynomial: {
      double acc = 0.0;
      for (auto it = params_.rbegin(); it != params_.rend(); ++it) acc = acc * a + *it;
      return acc;
    }
    case Kind::grid: {
      const auto& x = grid_.nodes;
      if (a <= x.front()) return grid_.values.front();
      if (a >= x.back()) return grid_.values.back();
      const auto it = std::upper_bound(x.begin(), x.end(), a);
      const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
      const double w = (a - x[i]) / (x[i + 1] - x[i]);
      return grid_.values[i] + w * (grid_.values[i + 1] - grid_.values[i]);
    }
  }
  return 0.0;
}

namespace {

double poly_second_derivative(const std::vector<double>& c, double a) {
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > 2;) acc = acc * a + static_cast<double>(i * (i - 1)) * c[i];
  return acc;
}

}  // namespace

bool Utility::concave_on(const Interval& domain) const {
  switch (kind_) {
    case Kind::quadratic:
      return true;
    case Kind::power:
      return params_[0] >= 0.0 && params_[1] >= 1.0;
    case Kind::polynomial: {
      const auto xs = linspace(domain.lo, domain.hi, 513);
      return std::all_of(xs.begin(), xs.end(), [&](double a) { return poly_second_derivative(params_, a) <= 1e-12; });
    }
    case Kind::grid: {
      const auto& x = grid_.nodes;
      const auto& v = grid_.values;
      for (std::size_t i = 1; i + 1 < x.size(); ++i) {
        if (x[i] <= domain.lo || x[i] >= domain.hi) continue;
        const double left = (v[i] - v[i - 1]) / (x[i] - x[i - 1]);
        const double right = (v[i + 1] - v[i]) / (x[i + 1] - x[i]);
        if (right > left + 1e-12 * (1.0 + std::abs(left))) return false;
      }
      return true;
    }
  }
  return false;
}

bool Utility::strictly_concave(const Interval& domain) const {
  switch (kind_) {
    case Kind::quadratic:
      return params_[0] != 0.0;
    case Kind::power:
      return params_[0] > 0.0 && params_[1] > 1.0;
    case Kind::polynomial: {
      const auto xs = linspace(domain.lo, domain.hi, 513);
      bool prev_zero = false;
      for (double a : xs) {
        const double d2 = poly_second_derivative(params_, a);
        if (d2 > 1e-12) return false;
        const bool zero = d2 > -1e-12;
        if (zero && prev_zero) return false;
        prev_zero = zero;
      }
      return true;
    }
    case Kind::grid:
      return false;
  }
  return false;
}

std::string Utility::tag() const {
  switch (kind_) {
    case Kind::quadratic: return "quadratic";
    case Kind::power: return "power";
    case Kind::polynomial: return "polynomial";
    case Kind::grid: return "grid";
  }
  return "unknown";
}

double TerminalUtility::operator()(double w) const {
  switch (kind_) {
    case Kind::quadratic:
      return -0.5 * param_ * param_ * w * w;
    case Kind::linear:
      return -param_ * w;
    case Kind::zero:
      return 0.0;
  }
  return 0.0;
}

std::string TerminalUtility::tag() const {
  switch (kind_) {
    case Kind::quadratic: return "quadratic";
    case Kind::linear: return "linear";
    case Kind::zero: return "zero";
  }
  return "unknown";
}

std::vector<double> HierarchySpec::betas() const {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < players.size(); ++i) out.push_back(players[i].beta);
  return out;
}

void HierarchySpec::validate(Warnings* warnings) const {
  if (players.empty()) throw validation_error("hierarchy.players: need at least one player");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw validation_error("hierarchy.sigma: must be > 0");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw validation_error("hierarchy.horizon: must be >= 0");
  for (std::size_t i = 0; i < players.size(); ++i) {
    const auto& p = players[i];
    std::ostringstream field;
    field << "hierarchy.players[" << i << "]";
    if (!(p.beta >= 0.0) || !std::isfinite(p.beta)) throw validation_error(field.str() + ".beta: must be >= 0");
    if (!std::isfinite(p.reservation)) throw validation_error(field.str() + ".reservation: must be finite");
    if (!(p.effort_domain.lo < p.effort_domain.hi))
      throw validation_error(field.str() + ".effort_domain: need lo < hi");
    if (p.utility.kind() == Utility::Kind::grid) {
      const auto& x = p.utility.grid().nodes;
      if (p.effort_domain.lo < x.front() || p.effort_domain.hi > x.back())
        throw validation_error(field.str() + ".utility: grid does not cover the effort domain");
    }
    if (p.utility.kind() == Utility::Kind::quadratic && !(p.utility.alpha() > 0.0))
      throw validation_error(field.str() + ".utility.alpha: must be > 0");
    if (warnings) {
      if (!p.utility.concave_on(p.effort_domain)) {
        warnings->push_back({"nonconcave_utility",
                             field.str() + ": utility is not concave on its domain; the touching set may be a "
                                           "strict subset and the parametrization may have gaps",
                             static_cast<double>(i + 1)});
      } else if (!p.utility.strictly_concave(p.effort_domain)) {
        warnings->push_back({"not_strictly_concave",
                             field.str() + ": utility is not strictly concave; inner maximizers on flat "
                                           "stretches resolve to plateau midpoints",
                             static_cast<double>(i + 1)});
      }
    }
  }
}

GammaTable gamma_coefficients(std::span<const double> betas, std::size_t n_players) {
  if (n_players == 0) throw validation_error("gamma coefficients: need at least one player");
  if (betas.size() + 1 < n_players) throw validation_error("gamma coefficients: need N-1 payment slopes");
  for (std::size_t l = 0; l + 1 < n_players; ++l)
    if (!(betas[l] >= 0.0)) throw validation_error("gamma coefficients: payment slopes must be >= 0");
  GammaTable g(n_players);
  for (std::size_t i = 0; i < n_players; ++i) {
    g(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n_players; ++j) g(i, j) = g(i, j - 1) * betas[j - 1];
  }
  return g;
}

double aggregate_cost(std::size_t i, const GammaTable& gamma, std::span<const Utility> utilities,
                      std::span<const double> tail) {
  const std::size_t n = gamma.size();
  if (i >= n || tail.size() != n - i || utilities.size() != n)
    throw validation_error("aggregate cost: dimension mismatch");
  double acc = 0.0;
  for (std::size_t j = i; j < n; ++j) acc += gamma(i, j) * utilities[j](tail[j - i]);
  return acc;
}

std::vector<Utility> AggregateContract::utilities() const { return utilities_; }

void AggregateContract::refresh() {
  utilities_.clear();
  for (const auto& p : spec.players) utilities_.push_back(p.utility);
}

double AggregateContract::mu(std::size_t i, std::span<const double> tail) const {
  return aggregate_cost(i, gamma, utilities_, tail);
}

AggregateContract build_aggregate(const HierarchySpec& spec, const GridConfig& grid) {
  AggregateContract out;
  spec.validate(&out.warnings);
  if (grid.y_nodes < 3) throw validation_error("grid.y_nodes: must be >= 3");
  const std::size_t n = spec.size();

  out.spec = spec;
  out.grid = grid;
  out.refresh();
  out.gamma = gamma_coefficients(spec.betas(), n);
  out.w_star.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) out.w_star[i] += out.gamma(i, j) * spec.players[j].reservation;

  out.levels.resize(n);
  const auto utils = out.utilities();
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = n - 1 - step;
    const bool last = i + 1 == n;
    const EffortParametrization downstream = last ? EffortParametrization::empty() : out.levels[i + 1].psi;

    double lo = 0.0, hi = 0.0;
    for (std::size_t j = i; j < n; ++j) {
      lo += spec.players[j].effort_domain.lo;
      hi += spec.players[j].effort_domain.hi;
    }
    const auto y_grid = linspace(lo, hi, grid.y_nodes);

    const Utility& own = utils[i];
    const double beta = spec.players[i].beta;
    FiberObjective objective;
    if (last) {
      objective = [&own](double z, std::span<const double>) { return own(z); };
    } else {
      objective = [&out, &own, beta, i](double z, std::span<const double> tail) {
        return own(z) + beta * out.mu(i + 1, tail);
      };
    }

    FiberOptions opt;
    opt.own_domain = spec.players[i].effort_domain;
    opt.coarse_points = grid.coarse_points;
    FGammaEnvelope fg = fgamma_envelope(objective, downstream, y_grid, opt);

    Level level;
    const std::size_t m = fg.envelope.size();
    level.fiber.assign(fg.fiber.value.values.begin() + static_cast<std::ptrdiff_t>(fg.offset),
                       fg.fiber.value.values.begin() + static_cast<std::ptrdiff_t>(fg.offset + m));
    level.inner.assign(fg.fiber.inner.values.begin() + static_cast<std::ptrdiff_t>(fg.offset),
                       fg.fiber.inner.values.begin() + static_cast<std::ptrdiff_t>(fg.offset + m));
    level.truncated.assign(fg.fiber.truncated.begin() + static_cast<std::ptrdiff_t>(fg.offset),
                           fg.fiber.truncated.begin() + static_cast<std::ptrdiff_t>(fg.offset + m));
    if (!last) {
      const Level& next = out.levels[i + 1];
      for (std::size_t k = 0; k < m; ++k) {
        if (!std::isfinite(level.inner[k])) continue;
        const double u = fg.envelope.nodes[k] - level.inner[k];
        const auto [b0, b1] = next.psi.bracket(u);
        if (next.truncated[b0] || next.truncated[b1]) level.truncated[k] = 1;
      }
    }
    level.envelope = std::move(fg.envelope);
    level.psi = std::move(fg.psi);

    for (auto& w : fg.warnings) {
      std::ostringstream os;
      os << "player " << i + 1 << ": " << w.message;
      w.message = os.str();
      out.warnings.push_back(std::move(w));
    }
    out.levels[i] = std::move(level);
  }
  return out;
}

}  // namespace hc
