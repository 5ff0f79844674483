#pragma once

#include <cmath>
#include <utility>

namespace hc {

struct ScalarMax {
  double x;
  double value;
};

// Golden-section maximization of a unimodal function on [a, b]. The bracket
// shrinks until its width drops below `tol`; endpoints are compared at the
// end so a maximizer sitting on the boundary is returned exactly.
template <class F>
ScalarMax golden_section_maximize(F&& f, double a, double b, double tol = 1e-10, int max_iter = 200) {
  if (b < a) std::swap(a, b);
  if (b - a <= tol) {
    const double m = 0.5 * (a + b);
    return {m, f(m)};
  }
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double fa = f(a);
  const double fb = f(b);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  double lo = a, hi = b;
  for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  ScalarMax best = fc >= fd ? ScalarMax{c, fc} : ScalarMax{d, fd};
  if (fa > best.value) best = {a, fa};
  if (fb > best.value) best = {b, fb};
  return best;
}

}  // namespace hc
