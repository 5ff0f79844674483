#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace hc::oracle {

// Least concave majorant of a point set evaluated at every node: the largest
// chord value over all pairs (j <= i <= k) of finite points. O(n^3).
inline std::vector<double> all_chords_hull(const std::vector<double>& x, const std::vector<double>& v) {
  const std::size_t n = x.size();
  std::vector<double> out(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (!std::isfinite(v[j])) continue;
      for (std::size_t k = i; k < n; ++k) {
        if (!std::isfinite(v[k])) continue;
        double c;
        if (j == k) {
          c = v[j];
        } else {
          c = v[j] + (x[i] - x[j]) * ((v[k] - v[j]) / (x[k] - x[j]));
        }
        out[i] = std::max(out[i], c);
      }
    }
  }
  return out;
}

// Brute-force argmax of a function sampled on a fine uniform grid.
template <class F>
double grid_argmax(F&& f, double lo, double hi, std::size_t n = 200001) {
  double best_x = lo, best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    const double val = f(x);
    if (val > best_v) {
      best_v = val;
      best_x = x;
    }
  }
  return best_x;
}

// Mean and standard error of a sample.
struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

inline Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) m.mean += x;
  m.mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.se = std::sqrt(ss / (n - 1.0) / n);
  return m;
}

}  // namespace hc::oracle
