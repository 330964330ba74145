#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "stainkit/kernels.hpp"
#include "stainkit/rng.hpp"

using namespace stainkit;
namespace kn = stainkit::kernels;

namespace {

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return a.empty() ||
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool bits_equal(double a, double b) {
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

struct BackendGuard {
  kn::Backend saved;
  BackendGuard() : saved(kn::active_backend()) {}
  ~BackendGuard() { kn::set_backend(saved); }
};

const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 15, 16, 33, 128, 1001};

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("dot matches a high-precision reference") {
  Rng rng(11);
  for (std::size_t n : kSizes) {
    const auto x = random_vec(rng, n);
    const auto y = random_vec(rng, n);
    long double ref = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      ref += static_cast<long double>(x[i]) * y[i];
    }
    const double got = kn::dot(x.data(), y.data(), n);
    CHECK(got == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
  }
}

TEST_CASE("scalar and avx2 backends are bit-identical") {
  if (!kn::avx2_supported()) return;  // nothing to compare on this machine
  BackendGuard guard;
  Rng rng(42);

  for (std::size_t n : kSizes) {
    const auto x = random_vec(rng, n);
    const auto y = random_vec(rng, n);

    // dot
    REQUIRE(kn::set_backend(kn::Backend::scalar));
    const double dot_s = kn::dot(x.data(), y.data(), n);
    REQUIRE(kn::set_backend(kn::Backend::avx2));
    const double dot_v = kn::dot(x.data(), y.data(), n);
    CHECK(bits_equal(dot_s, dot_v));

    // sum_sq_diff
    kn::set_backend(kn::Backend::scalar);
    const double ssd_s = kn::sum_sq_diff(x.data(), y.data(), n);
    kn::set_backend(kn::Backend::avx2);
    const double ssd_v = kn::sum_sq_diff(x.data(), y.data(), n);
    CHECK(bits_equal(ssd_s, ssd_v));

    // axpy
    std::vector<double> ya = y, yb = y;
    kn::set_backend(kn::Backend::scalar);
    kn::axpy(ya.data(), 0.37, x.data(), n);
    kn::set_backend(kn::Backend::avx2);
    kn::axpy(yb.data(), 0.37, x.data(), n);
    CHECK(bits_equal(ya, yb));

    // relu + mask grad
    std::vector<double> ra(n), rb(n), ga = y, gb = y;
    kn::set_backend(kn::Backend::scalar);
    kn::relu(ra.data(), x.data(), n);
    kn::relu_mask_grad(ga.data(), x.data(), n);
    kn::set_backend(kn::Backend::avx2);
    kn::relu(rb.data(), x.data(), n);
    kn::relu_mask_grad(gb.data(), x.data(), n);
    CHECK(bits_equal(ra, rb));
    CHECK(bits_equal(ga, gb));
  }
}

TEST_CASE("pair and pixel kernels are bit-identical across backends") {
  if (!kn::avx2_supported()) return;
  BackendGuard guard;
  Rng rng(7);

  const double wh[3] = {0.65, 0.70, 0.29};
  const double we[3] = {0.07, 0.99, 0.11};
  const kn::Nnls2Gram gram = kn::make_nnls2_gram(wh, we);

  for (std::size_t n : kSizes) {
    const auto pairs = random_vec(rng, 2 * n, 0.0, 3.0);
    const auto od = random_vec(rng, 3 * n, -0.2, 2.4);  // includes negatives

    std::vector<double> pa(2 * n), pb(2 * n);
    std::vector<double> oa(3 * n), ob(3 * n);
    std::vector<double> ca(2 * n), cb(2 * n);

    kn::set_backend(kn::Backend::scalar);
    kn::perturb_pairs(pa.data(), pairs.data(), n, 1.1, -0.05, 0.9, 0.07);
    kn::mix2_batch(oa.data(), pairs.data(), n, wh, we);
    kn::nnls2_batch(ca.data(), od.data(), n, gram);

    kn::set_backend(kn::Backend::avx2);
    kn::perturb_pairs(pb.data(), pairs.data(), n, 1.1, -0.05, 0.9, 0.07);
    kn::mix2_batch(ob.data(), pairs.data(), n, wh, we);
    kn::nnls2_batch(cb.data(), od.data(), n, gram);

    CHECK(bits_equal(pa, pb));
    CHECK(bits_equal(oa, ob));
    CHECK(bits_equal(ca, cb));
  }

  // Near-parallel columns force the degenerate path in both backends.
  const double we2[3] = {0.65, 0.70, 0.29000000001};
  const kn::Nnls2Gram degenerate = kn::make_nnls2_gram(wh, we2);
  CHECK_FALSE(degenerate.det_ok);
  const auto od = random_vec(rng, 3 * 64, 0.0, 2.0);
  std::vector<double> ca(2 * 64), cb(2 * 64);
  kn::set_backend(kn::Backend::scalar);
  kn::nnls2_batch(ca.data(), od.data(), 64, degenerate);
  kn::set_backend(kn::Backend::avx2);
  kn::nnls2_batch(cb.data(), od.data(), 64, degenerate);
  CHECK(bits_equal(ca, cb));
}

TEST_CASE("relu clamp semantics pin -0.0 and NaN to +0.0") {
  BackendGuard guard;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> src = {-0.0, +0.0, nan, -1.5, 2.5, -1e-300};
  const double pos_zero = 0.0;

  for (kn::Backend b : {kn::Backend::scalar, kn::Backend::avx2}) {
    if (b == kn::Backend::avx2 && !kn::avx2_supported()) continue;
    REQUIRE(kn::set_backend(b));
    std::vector<double> dst(src.size());
    kn::relu(dst.data(), src.data(), src.size());
    CHECK(bits_equal(dst[0], pos_zero));
    CHECK(bits_equal(dst[1], pos_zero));
    CHECK(bits_equal(dst[2], pos_zero));
    CHECK(bits_equal(dst[3], pos_zero));
    CHECK(dst[4] == 2.5);
    CHECK(bits_equal(dst[5], pos_zero));
  }
}

TEST_CASE("nnls2 recovers exact cone members and clamps outside points") {
  const double wh[3] = {0.6443, 0.7167, 0.2668};
  const double we[3] = {0.0928, 0.9541, 0.2831};
  const kn::Nnls2Gram gram = kn::make_nnls2_gram(wh, we);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double c1 = rng.uniform(0.0, 3.0);
    const double c2 = rng.uniform(0.0, 3.0);
    double od[3];
    for (int c = 0; c < 3; ++c) od[c] = c1 * wh[c] + c2 * we[c];
    double conc[2];
    kn::nnls2_batch(conc, od, 1, gram);
    CHECK(conc[0] == doctest::Approx(c1).epsilon(1e-9));
    CHECK(conc[1] == doctest::Approx(c2).epsilon(1e-9));
  }

  // v = 0 -> c = 0
  const double zero_od[3] = {0.0, 0.0, 0.0};
  double conc[2] = {99.0, 99.0};
  kn::nnls2_batch(conc, zero_od, 1, gram);
  CHECK(conc[0] == 0.0);
  CHECK(conc[1] == 0.0);

  // A vector opposite one stain forces that concentration to the boundary.
  double anti[3];
  for (int c = 0; c < 3; ++c) anti[c] = 1.0 * wh[c] - 0.8 * we[c];
  kn::nnls2_batch(conc, anti, 1, gram);
  CHECK(conc[0] >= 0.0);
  CHECK(conc[1] == 0.0);
}

TEST_SUITE_END();
