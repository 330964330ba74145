#include "stainkit/stain_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stainkit/errors.hpp"
#include "stainkit/kernels.hpp"
#include "stainkit/rng.hpp"

namespace stainkit {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMuEps = 1e-12;       // multiplicative-update denominator guard
constexpr double kInitFloor = 1e-4;    // unlocks zero entries before NMF
constexpr double kRankRatio = 1e-8;    // second/first eigenvalue degeneracy cut

// Tissue OD triples, sorted lexicographically. Sorting canonicalizes the
// accumulation order, which is what makes estimation invariant to pixel
// shuffling down to the last bit.
std::vector<double> collect_tissue_ods_sorted(const OdImage& od,
                                              const TissueMask& mask) {
  std::vector<std::array<double, 3>> pixels;
  pixels.reserve(mask.tissue_count());
  const std::size_t n = od.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.bits[i]) {
      pixels.push_back(
          {od.data[3 * i], od.data[3 * i + 1], od.data[3 * i + 2]});
    }
  }
  std::sort(pixels.begin(), pixels.end());
  std::vector<double> flat(pixels.size() * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    flat[3 * i] = pixels[i][0];
    flat[3 * i + 1] = pixels[i][1];
    flat[3 * i + 2] = pixels[i][2];
  }
  return flat;
}

struct EigenDecomposition3 {
  std::array<double, 3> values;                  // descending
  std::array<std::array<double, 3>, 3> vectors;  // vectors[i] pairs values[i]
};

// Cyclic Jacobi for a symmetric 3x3 matrix. Plenty for a covariance of OD
// triples and keeps the pipeline dependency-free and deterministic.
EigenDecomposition3 eigen_symmetric3(std::array<std::array<double, 3>, 3> a) {
  std::array<std::array<double, 3>, 3> v = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = std::sqrt(a[0][1] * a[0][1] + a[0][2] * a[0][2] +
                                 a[1][2] * a[1][2]);
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < 3; ++i) {
          const double aip = a[i][p];
          const double aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (int i = 0; i < 3; ++i) {
          const double api = a[p][i];
          const double aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (int i = 0; i < 3; ++i) {
          const double vip = v[i][p];
          const double viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }

  EigenDecomposition3 d;
  std::array<int, 3> order = {0, 1, 2};
  std::array<double, 3> evals = {a[0][0], a[1][1], a[2][2]};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return evals[i] > evals[j]; });
  for (int r = 0; r < 3; ++r) {
    d.values[r] = evals[order[r]];
    for (int i = 0; i < 3; ++i) d.vectors[r][i] = v[i][order[r]];
  }
  return d;
}

// Macenko core on a sorted tissue OD set.
StainMatrix macenko_from_ods(const std::vector<double>& ods,
                             double angle_percentile) {
  const std::size_t n = ods.size() / 3;

  std::array<double, 3> mean = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) mean[c] += ods[3 * i + c];
  }
  for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(n);

  std::array<std::array<double, 3>, 3> cov = {};
  for (std::size_t i = 0; i < n; ++i) {
    const double d0 = ods[3 * i] - mean[0];
    const double d1 = ods[3 * i + 1] - mean[1];
    const double d2 = ods[3 * i + 2] - mean[2];
    cov[0][0] += d0 * d0;
    cov[0][1] += d0 * d1;
    cov[0][2] += d0 * d2;
    cov[1][1] += d1 * d1;
    cov[1][2] += d1 * d2;
    cov[2][2] += d2 * d2;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      cov[i][j] /= static_cast<double>(n);
      cov[j][i] = cov[i][j];
    }
  }

  const EigenDecomposition3 eig = eigen_symmetric3(cov);
  if (!(eig.values[0] > 0.0) ||
      eig.values[1] < kRankRatio * eig.values[0]) {
    throw DegenerateColorError(
        "tissue OD cloud has rank < 2; cannot separate two stains");
  }

  // Orient the plane basis toward the data cone (the raw mean projects
  // positively onto e1; e2's sign only mirrors the angle distribution but
  // is fixed the same way for determinism).
  std::array<double, 3> e1 = eig.vectors[0];
  std::array<double, 3> e2 = eig.vectors[1];
  const auto dot3 = [](const std::array<double, 3>& a,
                       const std::array<double, 3>& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  };
  if (dot3(mean, e1) < 0.0) {
    for (auto& x : e1) x = -x;
  }
  if (dot3(mean, e2) < 0.0) {
    for (auto& x : e2) x = -x;
  }

  std::vector<double> angles(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, 3> p = {ods[3 * i], ods[3 * i + 1],
                                     ods[3 * i + 2]};
    angles[i] = std::atan2(dot3(p, e2), dot3(p, e1));
  }
  std::sort(angles.begin(), angles.end());
  const double phi_lo = percentile_sorted(angles, angle_percentile);
  const double phi_hi = percentile_sorted(angles, 100.0 - angle_percentile);

  const auto direction = [&](double phi) {
    std::array<double, 3> v;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    for (int i = 0; i < 3; ++i) {
      const double x = c * e1[i] + s * e2[i];
      v[i] = x > 0.0 ? x : 0.0;  // stain vectors are nonnegative OD
    }
    return v;
  };

  try {
    return canonical_stain_order(direction(phi_lo), direction(phi_hi),
                                 StainMethod::macenko);
  } catch (const ZeroColumnError&) {
    throw DegenerateColorError(
        "percentile stain direction left the nonnegative octant");
  }
}

double snmf_objective(const std::vector<double>& v, std::size_t n, int k,
                      const std::vector<double>& w,
                      const std::vector<double>& h, double lambda) {
  double fit = 0.0;
  double l1 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    for (int c = 0; c < 3; ++c) {
      double recon = 0.0;
      for (int r = 0; r < k; ++r) recon += w[3 * r + c] * h[k * j + r];
      const double d = v[3 * j + c] - recon;
      fit += d * d;
    }
    for (int r = 0; r < k; ++r) l1 += h[k * j + r];
  }
  return 0.5 * fit + lambda * l1;
}

}  // namespace

double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) {
    throw std::invalid_argument("percentile of empty sample");
  }
  if (p <= 0.0) return sorted.front();
  if (p >= 100.0) return sorted.back();
  const double idx = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const double frac = idx - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

SnmfResult sparse_nmf(const std::vector<double>& v, std::size_t n_cols, int k,
                      const SnmfConfig& cfg,
                      const std::vector<double>* w_init,
                      const std::vector<double>* h_init) {
  if (k < 1) throw std::invalid_argument("sparse_nmf: k must be >= 1");
  if (n_cols < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("sparse_nmf: need at least k columns");
  }
  if (v.size() != 3 * n_cols) {
    throw std::invalid_argument("sparse_nmf: V must be 3 x n column-major");
  }
  if (cfg.sparsity_lambda < 0.0 || cfg.max_iters < 1 || !(cfg.tol > 0.0)) {
    throw std::invalid_argument("sparse_nmf: invalid config");
  }

  SnmfResult res;
  res.k = k;
  if (w_init) {
    if (w_init->size() != static_cast<std::size_t>(3 * k)) {
      throw std::invalid_argument("sparse_nmf: W init has wrong size");
    }
    res.w = *w_init;
  }
  if (h_init) {
    if (h_init->size() != static_cast<std::size_t>(k) * n_cols) {
      throw std::invalid_argument("sparse_nmf: H init has wrong size");
    }
    res.h = *h_init;
  }
  if (!w_init || !h_init) {
    Rng rng(derive_seed(cfg.seed, {0x534e4d46ULL}));  // "SNMF"
    if (!w_init) {
      res.w.resize(static_cast<std::size_t>(3 * k));
      for (auto& x : res.w) x = rng.uniform(0.05, 1.0);
    }
    if (!h_init) {
      res.h.resize(static_cast<std::size_t>(k) * n_cols);
      for (auto& x : res.h) x = rng.uniform(0.05, 1.0);
    }
  }

  const double lambda = cfg.sparsity_lambda;
  std::vector<double>& w = res.w;
  std::vector<double>& h = res.h;

  res.objectives.push_back(snmf_objective(v, n_cols, k, w, h, lambda));

  std::vector<double> gram(static_cast<std::size_t>(k) * k);
  std::vector<double> num_h(k), den_h(k);
  std::vector<double> vht(static_cast<std::size_t>(3) * k);
  std::vector<double> hht(static_cast<std::size_t>(k) * k);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    // H step: H <- H * (W^T V) / (W^T W H + lambda + eps)
    for (int r = 0; r < k; ++r) {
      for (int s = 0; s < k; ++s) {
        double g = 0.0;
        for (int c = 0; c < 3; ++c) g += w[3 * r + c] * w[3 * s + c];
        gram[static_cast<std::size_t>(r) * k + s] = g;
      }
    }
    for (std::size_t j = 0; j < n_cols; ++j) {
      for (int r = 0; r < k; ++r) {
        double num = 0.0;
        for (int c = 0; c < 3; ++c) num += w[3 * r + c] * v[3 * j + c];
        double den = lambda + kMuEps;
        for (int s = 0; s < k; ++s) {
          den += gram[static_cast<std::size_t>(r) * k + s] * h[k * j + s];
        }
        num_h[r] = num;
        den_h[r] = den;
      }
      for (int r = 0; r < k; ++r) {
        h[k * j + r] = h[k * j + r] * (num_h[r] / den_h[r]);
      }
    }

    // W step: exact per-column minimizer under unit-norm, nonnegative
    // columns. For column r with the others fixed, F restricted to the
    // sphere is const - w_r . u with u = (V - sum_{j!=r} w_j h_j) h_r^T,
    // so the constrained minimizer is clamp(u, 0) normalized. Each column
    // update solves its subproblem exactly, which keeps the objective
    // monotone and pins the dictionary scale the L1 term needs.
    std::fill(vht.begin(), vht.end(), 0.0);
    std::fill(hht.begin(), hht.end(), 0.0);
    for (std::size_t j = 0; j < n_cols; ++j) {
      for (int r = 0; r < k; ++r) {
        const double hr = h[k * j + r];
        for (int c = 0; c < 3; ++c) vht[3 * r + c] += v[3 * j + c] * hr;
        for (int s = 0; s < k; ++s) {
          hht[static_cast<std::size_t>(r) * k + s] += hr * h[k * j + s];
        }
      }
    }
    for (int r = 0; r < k; ++r) {
      double u[3];
      for (int c = 0; c < 3; ++c) {
        double cross = 0.0;
        for (int s = 0; s < k; ++s) {
          if (s == r) continue;
          cross += w[3 * s + c] * hht[static_cast<std::size_t>(s) * k + r];
        }
        u[c] = vht[3 * r + c] - cross;
        if (u[c] < 0.0) u[c] = 0.0;
      }
      const double norm = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
      if (norm > 0.0) {
        for (int c = 0; c < 3; ++c) w[3 * r + c] = u[c] / norm;
      }
      // norm == 0: nothing correlates with this atom; keep the old column.
    }

    res.iterations = iter + 1;
    const double obj = snmf_objective(v, n_cols, k, w, h, lambda);
    const double prev = res.objectives.back();
    res.objectives.push_back(obj);
    const double rel = std::abs(prev - obj) / std::max(prev, 1e-30);
    if (rel < cfg.tol) break;
  }
  return res;
}

StainMatrix estimate_macenko(const RgbImage& img, double od_threshold,
                             double angle_percentile) {
  const OdImage od = rgb_to_od(img);
  const TissueMask mask = tissue_mask(od, od_threshold);
  const std::size_t tissue = mask.tissue_count();
  if (tissue < kMinTissuePixels) {
    throw InsufficientTissueError(tissue, kMinTissuePixels);
  }
  return macenko_from_ods(collect_tissue_ods_sorted(od, mask),
                          angle_percentile);
}

StainMatrix estimate_vahadane(const RgbImage& img, const SnmfConfig& cfg,
                              double od_threshold, VahadaneInfo* info) {
  const OdImage od = rgb_to_od(img);
  const TissueMask mask = tissue_mask(od, od_threshold);
  const std::size_t tissue = mask.tissue_count();
  if (tissue < kMinTissuePixels) {
    throw InsufficientTissueError(tissue, kMinTissuePixels);
  }
  const std::vector<double> ods = collect_tissue_ods_sorted(od, mask);
  const std::size_t n = ods.size() / 3;

  // Deterministic init: Macenko directions for W, one NNLS pass for H.
  // Entries are floored away from zero so multiplicative updates can move
  // anything the init pinned at the boundary.
  const StainMatrix w0 = macenko_from_ods(ods, kDefaultAnglePercentile);
  std::vector<double> w_init(6);
  for (int c = 0; c < 3; ++c) {
    w_init[c] = std::max(w0.hematoxylin[c], kInitFloor);
    w_init[3 + c] = std::max(w0.eosin[c], kInitFloor);
  }

  std::vector<double> h_init(2 * n);
  const kernels::Nnls2Gram gram =
      kernels::make_nnls2_gram(&w_init[0], &w_init[3]);
  kernels::nnls2_batch(h_init.data(), ods.data(), n, gram);
  for (auto& x : h_init) x = std::max(x, kInitFloor);

  const SnmfResult res = sparse_nmf(ods, n, 2, cfg, &w_init, &h_init);
  if (info) {
    info->iterations = res.iterations;
    info->objective = res.objectives.back();
  }

  try {
    return canonical_stain_order({res.w[0], res.w[1], res.w[2]},
                                 {res.w[3], res.w[4], res.w[5]},
                                 StainMethod::vahadane);
  } catch (const ZeroColumnError&) {
    throw DegenerateColorError("sparse NMF collapsed a stain column to zero");
  }
}

ConcentrationMap solve_concentrations(const OdImage& od, const StainMatrix& w,
                                      const TissueMask* mask) {
  (void)mask;  // every pixel is solved; see header
  ConcentrationMap out(od.width, od.height);
  const kernels::Nnls2Gram gram =
      kernels::make_nnls2_gram(w.hematoxylin.data(), w.eosin.data());
  kernels::nnls2_batch(out.data.data(), od.data.data(), od.pixel_count(),
                       gram);
  return out;
}

std::array<double, 2> percentile_concentrations(const ConcentrationMap& c,
                                                const TissueMask* mask,
                                                double pct) {
  std::array<double, 2> result{};
  const std::size_t n = c.pixel_count();
  for (int s = 0; s < 2; ++s) {
    std::vector<double> values;
    values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask && !mask->bits[i]) continue;
      values.push_back(c.data[2 * i + s]);
    }
    if (values.empty()) {
      for (std::size_t i = 0; i < n; ++i) values.push_back(c.data[2 * i + s]);
    }
    std::sort(values.begin(), values.end());
    result[s] = percentile_sorted(values, pct);
  }
  return result;
}

StainProfile estimate_profile(const RgbImage& img, StainMethod method,
                              const SnmfConfig& cfg, double od_threshold,
                              VahadaneInfo* info) {
  StainProfile profile;
  switch (method) {
    case StainMethod::macenko:
      profile.matrix = estimate_macenko(img, od_threshold);
      break;
    case StainMethod::vahadane:
      profile.matrix = estimate_vahadane(img, cfg, od_threshold, info);
      break;
    case StainMethod::reference:
      profile.matrix = reference_he();
      break;
  }
  const OdImage od = rgb_to_od(img);
  const TissueMask mask = tissue_mask(od, od_threshold);
  const ConcentrationMap conc = solve_concentrations(od, profile.matrix);
  profile.max_concentrations = percentile_concentrations(conc, &mask);
  return profile;
}

}  // namespace stainkit
