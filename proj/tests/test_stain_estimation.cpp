#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "oracles.hpp"
#include "stainkit/color_optics.hpp"
#include "stainkit/errors.hpp"
#include "stainkit/evaluation.hpp"
#include "stainkit/rng.hpp"
#include "stainkit/stain_estimation.hpp"

using namespace stainkit;

namespace {

// One synthetic tile rendered from a known stain matrix; the estimation
// oracle used throughout this suite. The prototype is sparse (noise well
// above the mean), so many pixels are dominated by a single stain -- the
// regime the sparse factorization is built for.
RgbImage render_tile(const StainMatrix& w, std::uint64_t seed, int side = 64) {
  SyntheticDomainSpec spec;
  spec.stains = w;
  spec.prototypes = {{"mix", 0.35, 0.35, 0.9}};
  spec.n_per_class = 1;
  spec.tile_size = side;
  spec.smooth_radius = 1;
  spec.seed = seed;
  return render_synthetic(spec).images[0];
}

RgbImage shuffled_pixels(const RgbImage& img, std::uint64_t seed) {
  RgbImage out = img;
  std::vector<std::size_t> order(img.pixel_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.data(), order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      out.data[3 * i + c] = img.data[3 * order[i] + c];
    }
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("stain_estimation");

TEST_CASE("macenko recovers a known stain matrix within 2 degrees") {
  const StainMatrix truth = reference_he();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const RgbImage img = render_tile(truth, seed);
    const StainMatrix est = estimate_macenko(img);
    CHECK(max_column_angle_deg(est, truth) < 2.0);
    CHECK(est.method == StainMethod::macenko);
  }
}

TEST_CASE("vahadane recovers a known stain matrix within 3 degrees") {
  const StainMatrix truth = reference_he();
  for (std::uint64_t seed : {4ULL, 5ULL}) {
    const RgbImage img = render_tile(truth, seed);
    VahadaneInfo info;
    const StainMatrix est = estimate_vahadane(img, {}, kDefaultOdThreshold,
                                              &info);
    CHECK(max_column_angle_deg(est, truth) < 3.0);
    CHECK(info.iterations >= 1);
    CHECK(est.method == StainMethod::vahadane);
  }
}

TEST_CASE("estimators reject images without tissue") {
  const RgbImage white(48, 48);  // all 255
  CHECK_THROWS_AS(estimate_macenko(white), InsufficientTissueError);
  CHECK_THROWS_AS(estimate_vahadane(white), InsufficientTissueError);
  try {
    estimate_macenko(white);
  } catch (const InsufficientTissueError& e) {
    CHECK(std::string(e.what()).find("insufficient tissue") !=
          std::string::npos);
  }
}

TEST_CASE("rank-1 color clouds are degenerate") {
  // A monochrome image: every pixel's OD is a multiple of (1,1,1), exactly,
  // even after 8-bit quantization.
  RgbImage img(32, 32);
  Rng rng(17);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto v = static_cast<std::uint8_t>(30 + rng.below(150));
    img.data[3 * i] = v;
    img.data[3 * i + 1] = v;
    img.data[3 * i + 2] = v;
  }
  CHECK_THROWS_AS(estimate_macenko(img), DegenerateColorError);
  CHECK_THROWS_AS(estimate_vahadane(img), DegenerateColorError);
}

TEST_CASE("macenko is scale invariant") {
  const StainMatrix truth = reference_he();
  const RgbImage img = render_tile(truth, 9);
  const OdImage od = rgb_to_od(img);
  OdImage od_scaled(od.width, od.height);
  for (std::size_t i = 0; i < od.data.size(); ++i) {
    od_scaled.data[i] = 0.5 * od.data[i];
  }
  // Angles are scale-free, so halving every OD vector moves nothing (the
  // mask threshold is scaled along to keep the same pixel set).
  const StainMatrix a = estimate_macenko(img, 0.15);
  const StainMatrix b = estimate_macenko(od_to_rgb(od_scaled), 0.075);
  CHECK(max_column_angle_deg(a, b) < 0.5);
}

TEST_CASE("estimation is invariant to pixel order, bit for bit") {
  const StainMatrix truth = reference_he();
  const RgbImage img = render_tile(truth, 11);
  const RgbImage shuffled = shuffled_pixels(img, 123);

  const StainMatrix m1 = estimate_macenko(img);
  const StainMatrix m2 = estimate_macenko(shuffled);
  CHECK(m1.hematoxylin == m2.hematoxylin);
  CHECK(m1.eosin == m2.eosin);

  const StainMatrix v1 = estimate_vahadane(img);
  const StainMatrix v2 = estimate_vahadane(shuffled);
  CHECK(v1.hematoxylin == v2.hematoxylin);
  CHECK(v1.eosin == v2.eosin);
}

TEST_CASE("vahadane is deterministic for a fixed seed") {
  const RgbImage img = render_tile(reference_he(), 13);
  SnmfConfig cfg;
  cfg.seed = 77;
  const StainMatrix a = estimate_vahadane(img, cfg);
  const StainMatrix b = estimate_vahadane(img, cfg);
  CHECK(a.hematoxylin == b.hematoxylin);
  CHECK(a.eosin == b.eosin);
}

TEST_CASE("sparse_nmf: exact factorization is recovered with lambda = 0") {
  Rng rng(31);
  const std::size_t n = 240;
  std::vector<double> w0 = {0.6, 0.7, 0.3, 0.1, 0.9, 0.2};
  std::vector<double> v(3 * n);
  double v_norm_sq = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double h0 = rng.uniform(0.0, 2.0);
    const double h1 = rng.uniform(0.0, 2.0);
    for (int c = 0; c < 3; ++c) {
      v[3 * j + c] = w0[c] * h0 + w0[3 + c] * h1;
      v_norm_sq += v[3 * j + c] * v[3 * j + c];
    }
  }

  SnmfConfig cfg;
  cfg.sparsity_lambda = 0.0;
  cfg.max_iters = 2000;
  cfg.tol = 1e-14;
  cfg.seed = 5;
  const SnmfResult res = sparse_nmf(v, n, 2, cfg);

  CHECK(res.objectives.back() <= res.objectives.front());
  // relative reconstruction error |V - WH|_F / |V|_F
  const double rel =
      std::sqrt(2.0 * res.objectives.back() / v_norm_sq);
  CHECK(rel < 1e-3);
  for (double x : res.w) CHECK(x >= 0.0);
  for (double x : res.h) CHECK(x >= 0.0);
}

TEST_CASE("sparse_nmf: huge lambda drives H to zero") {
  Rng rng(33);
  const std::size_t n = 100;
  std::vector<double> v(3 * n);
  double v_norm_sq = 0.0;
  for (auto& x : v) {
    x = rng.uniform(0.0, 2.0);
  }
  for (double x : v) v_norm_sq += x * x;

  SnmfConfig cfg;
  cfg.sparsity_lambda = 1e6;
  cfg.max_iters = 400;
  cfg.tol = 1e-12;
  const SnmfResult res = sparse_nmf(v, n, 2, cfg);
  double h_sum = 0.0;
  for (double x : res.h) h_sum += x;
  CHECK(h_sum < 1e-6);
  CHECK(res.objectives.back() ==
        doctest::Approx(0.5 * v_norm_sq).epsilon(1e-6));
}

TEST_CASE("sparse_nmf objective is monotone non-increasing") {
  Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 50 + rng.below(200);
    std::vector<double> v(3 * n);
    for (auto& x : v) x = rng.uniform(0.0, 2.5);
    SnmfConfig cfg;
    cfg.sparsity_lambda = rng.uniform(0.0, 0.5);
    cfg.max_iters = 60;
    cfg.seed = rng.next_u64();
    const SnmfResult res = sparse_nmf(v, n, 2, cfg);
    for (std::size_t t = 1; t < res.objectives.size(); ++t) {
      CHECK(res.objectives[t] <= res.objectives[t - 1] + 1e-9);
    }
  }
}

TEST_CASE("solve_concentrations inverts the cone exactly") {
  const StainMatrix w = reference_he();
  Rng rng(41);
  OdImage od(16, 16);
  std::vector<double> expected(2 * od.pixel_count());
  for (std::size_t i = 0; i < od.pixel_count(); ++i) {
    const double c1 = rng.uniform(0.0, 3.0);
    const double c2 = rng.uniform(0.0, 3.0);
    expected[2 * i] = c1;
    expected[2 * i + 1] = c2;
    for (int ch = 0; ch < 3; ++ch) {
      od.data[3 * i + ch] = c1 * w.hematoxylin[ch] + c2 * w.eosin[ch];
    }
  }
  const ConcentrationMap conc = solve_concentrations(od, w);
  for (std::size_t i = 0; i < 2 * od.pixel_count(); ++i) {
    CHECK(conc.data[i] == doctest::Approx(expected[i]).epsilon(1e-6));
    CHECK(conc.data[i] >= 0.0);
  }
}

TEST_CASE("solve_concentrations matches the grid oracle off-cone") {
  const StainMatrix w = reference_he();
  Rng rng(43);
  const std::size_t n = 100;
  OdImage od(static_cast<int>(n), 1);
  for (auto& x : od.data) x = rng.uniform(0.0, 2.0);
  const ConcentrationMap conc = solve_concentrations(od, w);

  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, 3> v = {od.data[3 * i], od.data[3 * i + 1],
                                     od.data[3 * i + 2]};
    const double ours = test_oracles::nnls_objective(
        w, v, conc.data[2 * i], conc.data[2 * i + 1]);
    const double grid = test_oracles::grid_nnls_min_objective(w, v);
    CHECK(ours <= grid + 1e-12);  // never worse than any grid point
    CHECK(grid - ours < 1e-5);    // and the grid confirms it within res^2
  }
}

TEST_CASE("percentile uses linear interpolation") {
  const std::vector<double> s = {1.0, 2.0, 3.0, 4.0};
  CHECK(percentile_sorted(s, 0.0) == 1.0);
  CHECK(percentile_sorted(s, 100.0) == 4.0);
  CHECK(percentile_sorted(s, 50.0) == doctest::Approx(2.5));
  CHECK(percentile_sorted(s, 25.0) == doctest::Approx(1.75));
  CHECK_THROWS_AS(percentile_sorted({}, 50.0), std::invalid_argument);
}

TEST_CASE("estimate_profile reports positive max concentrations") {
  const RgbImage img = render_tile(reference_he(), 19);
  const StainProfile p = estimate_profile(img, StainMethod::macenko);
  CHECK(p.max_concentrations[0] > 0.0);
  CHECK(p.max_concentrations[1] > 0.0);
}

TEST_SUITE_END();
