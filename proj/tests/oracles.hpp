#pragma once

// Test-only oracles. These stay independent of the library's solver paths:
// the NNLS oracle scans a grid, never the closed-form case analysis it
// checks.

#include <algorithm>
#include <array>
#include <cmath>

#include "stainkit/stain_matrix.hpp"

namespace test_oracles {

// 0.5 * |v - W c|^2 evaluated directly.
inline double nnls_objective(const stainkit::StainMatrix& w,
                             const std::array<double, 3>& v, double c1,
                             double c2) {
  double acc = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double r = v[ch] - (c1 * w.hematoxylin[ch] + c2 * w.eosin[ch]);
    acc += r * r;
  }
  return 0.5 * acc;
}

// Minimum of nnls_objective over the grid {0, res, ..., cmax}^2. For each
// grid value of c2 the objective is a convex quadratic in c1, so the row
// minimum sits at a grid neighbor of the clamped vertex; scanning rows is
// exactly the full grid search, without the quadratic node count.
inline double grid_nnls_min_objective(const stainkit::StainMatrix& w,
                                      const std::array<double, 3>& v,
                                      double res = 1e-3, double cmax = 3.0) {
  const auto& wh = w.hematoxylin;
  const auto& we = w.eosin;
  const double g11 = wh[0] * wh[0] + wh[1] * wh[1] + wh[2] * wh[2];
  const double g12 = wh[0] * we[0] + wh[1] * we[1] + wh[2] * we[2];
  const double b1 = wh[0] * v[0] + wh[1] * v[1] + wh[2] * v[2];

  const long n = std::lround(cmax / res);
  double best = nnls_objective(w, v, 0.0, 0.0);
  for (long j = 0; j <= n; ++j) {
    const double c2 = static_cast<double>(j) * res;
    const double vertex = (b1 - g12 * c2) / g11;
    const double clamped = std::clamp(vertex, 0.0, cmax);
    const long lo = static_cast<long>(std::floor(clamped / res));
    for (long i = lo; i <= lo + 1; ++i) {
      const long ii = std::clamp(i, 0L, n);
      const double c1 = static_cast<double>(ii) * res;
      best = std::min(best, nnls_objective(w, v, c1, c2));
    }
  }
  return best;
}

}  // namespace test_oracles
