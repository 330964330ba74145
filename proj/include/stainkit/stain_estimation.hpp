#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stainkit/color_optics.hpp"
#include "stainkit/image.hpp"
#include "stainkit/stain_matrix.hpp"

// Stain-matrix estimation (Macenko and Vahadane) and per-pixel nonnegative
// concentration solving.
//
// Both estimators canonicalize the tissue pixel set by sorting OD triples
// lexicographically before any accumulation, so shuffling pixel order
// changes nothing, bit for bit.

namespace stainkit {

inline constexpr std::size_t kMinTissuePixels = 100;
inline constexpr double kDefaultAnglePercentile = 1.0;

// Per-pixel nonnegative (hematoxylin, eosin) concentration pairs,
// row-major interleaved.
struct ConcentrationMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // width * height * 2

  ConcentrationMap() = default;
  ConcentrationMap(int w, int h)
      : width(w), height(h),
        data(static_cast<std::size_t>(w) * h * 2, 0.0) {}

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

struct SnmfConfig {
  double sparsity_lambda = 0.1;
  int max_iters = 200;
  double tol = 1e-6;  // relative objective change
  std::uint64_t seed = 42;
};

struct SnmfResult {
  std::vector<double> w;  // 3 x k, column-major
  std::vector<double> h;  // k x n, column-major
  int k = 0;
  int iterations = 0;
  // objectives[0] is the initial value, objectives[t] the value after
  // iteration t; multiplicative updates make this non-increasing.
  std::vector<double> objectives;
};

// Sparse NMF of a nonnegative 3 x n matrix (column-major):
//   minimize 0.5*|V - WH|_F^2 + lambda*sum(H)
//   s.t. H >= 0, columns of W unit-norm and nonnegative
// H moves by multiplicative updates with L1 shrinkage; W by the exact
// per-column minimizer on the nonnegative unit sphere. Both half-steps are
// descent steps, so the objective sequence is non-increasing. With null
// init pointers, W and H start from seeded uniform noise.
SnmfResult sparse_nmf(const std::vector<double>& v, std::size_t n_cols, int k,
                      const SnmfConfig& cfg,
                      const std::vector<double>* w_init = nullptr,
                      const std::vector<double>* h_init = nullptr);

// Macenko: project tissue OD onto the top-2 principal directions, take the
// angle_percentile-th and (100-angle_percentile)-th percentile angles.
StainMatrix estimate_macenko(const RgbImage& img,
                             double od_threshold = kDefaultOdThreshold,
                             double angle_percentile = kDefaultAnglePercentile);

struct VahadaneInfo {
  int iterations = 0;
  double objective = 0.0;
};

// Vahadane: sparse NMF on tissue OD vectors, initialized from Macenko (W)
// and a nonnegative least-squares pass (H) so the result is deterministic.
// Non-convergence is not an error; the best iterate is returned and `info`
// (when provided) reports iterations used.
StainMatrix estimate_vahadane(const RgbImage& img, const SnmfConfig& cfg = {},
                              double od_threshold = kDefaultOdThreshold,
                              VahadaneInfo* info = nullptr);

// argmin_{c >= 0} |od_pixel - W c|^2 for every pixel, masked or not
// (background concentrations come out near zero by themselves). The mask
// parameter is accepted for callers that pass one along with the image; it
// does not change which pixels are solved.
ConcentrationMap solve_concentrations(const OdImage& od, const StainMatrix& w,
                                      const TissueMask* mask = nullptr);

// Linear-interpolation percentile of an ascending-sorted sample.
double percentile_sorted(const std::vector<double>& sorted, double p);

// Per-stain percentile concentrations (over tissue pixels when a mask is
// given, otherwise over all pixels).
std::array<double, 2> percentile_concentrations(const ConcentrationMap& c,
                                                const TissueMask* mask,
                                                double pct = 99.0);

// Estimate matrix + 99th-percentile concentrations in one go (what the
// `estimate` CLI writes to disk).
StainProfile estimate_profile(const RgbImage& img, StainMethod method,
                              const SnmfConfig& cfg = {},
                              double od_threshold = kDefaultOdThreshold,
                              VahadaneInfo* info = nullptr);

}  // namespace stainkit
