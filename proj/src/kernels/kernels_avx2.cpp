#include "kernels_backend.hpp"

#ifdef STAINKIT_HAVE_AVX2_BACKEND

#include <immintrin.h>

// AVX2 backend. Lane j of each accumulator mirrors partial[j] of the scalar
// reference, and clamps use maxpd with the value operand first, so results
// are bit-identical to kernels_scalar.cpp. No FMA anywhere: the contract is
// separate mul/add roundings.

namespace stainkit::kernels::detail {
namespace {

inline double combine_lanes(__m256d acc) {
  const __m128d lo = _mm256_castpd256_pd128(acc);
  const __m128d hi = _mm256_extractf128_pd(acc, 1);
  const double l0 = _mm_cvtsd_f64(lo);
  const double l1 = _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
  const double l2 = _mm_cvtsd_f64(hi);
  const double l3 = _mm_cvtsd_f64(_mm_unpackhi_pd(hi, hi));
  return (l0 + l1) + (l2 + l3);
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vy));
  }
  double r = combine_lanes(acc);
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) {
    const double t = a * x[i];
    y[i] = y[i] + t;
  }
}

double sum_sq_diff_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d =
        _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double r = combine_lanes(acc);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    r += d * d;
  }
  return r;
}

void relu_avx2(double* dst, const double* src, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(src + i), zero));
  }
  for (; i < n; ++i) {
    const double v = src[i];
    dst[i] = v > 0.0 ? v : 0.0;
  }
}

void relu_mask_grad_avx2(double* g, const double* pre, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask =
        _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(g + i, _mm256_and_pd(_mm256_loadu_pd(g + i), mask));
  }
  for (; i < n; ++i) {
    g[i] = pre[i] > 0.0 ? g[i] : 0.0;
  }
}

void perturb_pairs_avx2(double* dst, const double* src, std::size_t n_pairs,
                        double alpha_h, double beta_h, double alpha_e,
                        double beta_e) {
  const __m256d va = _mm256_setr_pd(alpha_h, alpha_e, alpha_h, alpha_e);
  const __m256d vb = _mm256_setr_pd(beta_h, beta_e, beta_h, beta_e);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n_pairs; i += 2) {
    const __m256d c = _mm256_loadu_pd(src + 2 * i);
    const __m256d t = _mm256_add_pd(_mm256_mul_pd(c, va), vb);
    _mm256_storeu_pd(dst + 2 * i, _mm256_max_pd(t, zero));
  }
  for (; i < n_pairs; ++i) {
    perturb_pair(dst[2 * i], dst[2 * i + 1], src[2 * i], src[2 * i + 1],
                 alpha_h, beta_h, alpha_e, beta_e);
  }
}

// [h0 e0 h1 e1],[h2 e2 h3 e3] -> [h0 h1 h2 h3],[e0 e1 e2 e3]
inline void deinterleave_pairs(__m256d d0, __m256d d1, __m256d& ch,
                               __m256d& ce) {
  const __m256d lo = _mm256_unpacklo_pd(d0, d1);  // h0 h2 h1 h3
  const __m256d hi = _mm256_unpackhi_pd(d0, d1);  // e0 e2 e1 e3
  ch = _mm256_permute4x64_pd(lo, _MM_SHUFFLE(3, 1, 2, 0));
  ce = _mm256_permute4x64_pd(hi, _MM_SHUFFLE(3, 1, 2, 0));
}

void mix2_batch_avx2(double* od, const double* conc, std::size_t n_pixels,
                     const double* wh, const double* we) {
  std::size_t i = 0;
  for (; i + 4 <= n_pixels; i += 4) {
    __m256d ch, ce;
    deinterleave_pairs(_mm256_loadu_pd(conc + 2 * i),
                       _mm256_loadu_pd(conc + 2 * i + 4), ch, ce);
    alignas(32) double chan[3][4];
    for (int c = 0; c < 3; ++c) {
      const __m256d th = _mm256_mul_pd(ch, _mm256_set1_pd(wh[c]));
      const __m256d te = _mm256_mul_pd(ce, _mm256_set1_pd(we[c]));
      _mm256_store_pd(chan[c], _mm256_add_pd(th, te));
    }
    for (int p = 0; p < 4; ++p) {
      od[3 * (i + p)] = chan[0][p];
      od[3 * (i + p) + 1] = chan[1][p];
      od[3 * (i + p) + 2] = chan[2][p];
    }
  }
  for (; i < n_pixels; ++i) {
    mix2_pixel(od + 3 * i, conc[2 * i], conc[2 * i + 1], wh, we);
  }
}

void nnls2_batch_avx2(double* conc, const double* od, std::size_t n_pixels,
                      const Nnls2Gram& g) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d wh0 = _mm256_set1_pd(g.wh[0]);
  const __m256d wh1 = _mm256_set1_pd(g.wh[1]);
  const __m256d wh2 = _mm256_set1_pd(g.wh[2]);
  const __m256d we0 = _mm256_set1_pd(g.we[0]);
  const __m256d we1 = _mm256_set1_pd(g.we[1]);
  const __m256d we2 = _mm256_set1_pd(g.we[2]);
  const __m256d g11 = _mm256_set1_pd(g.g11);
  const __m256d g12 = _mm256_set1_pd(g.g12);
  const __m256d g22 = _mm256_set1_pd(g.g22);
  const __m256d inv_det = _mm256_set1_pd(g.inv_det);
  const __m256d inv_g11 = _mm256_set1_pd(g.inv_g11);
  const __m256d inv_g22 = _mm256_set1_pd(g.inv_g22);
  const __m256d det_mask =
      _mm256_castsi256_pd(_mm256_set1_epi64x(g.det_ok ? -1 : 0));

  std::size_t i = 0;
  for (; i + 4 <= n_pixels; i += 4) {
    const double* p = od + 3 * i;
    const __m256d v0 = _mm256_setr_pd(p[0], p[3], p[6], p[9]);
    const __m256d v1 = _mm256_setr_pd(p[1], p[4], p[7], p[10]);
    const __m256d v2 = _mm256_setr_pd(p[2], p[5], p[8], p[11]);

    const __m256d b1 = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(wh0, v0), _mm256_mul_pd(wh1, v1)),
        _mm256_mul_pd(wh2, v2));
    const __m256d b2 = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(we0, v0), _mm256_mul_pd(we1, v1)),
        _mm256_mul_pd(we2, v2));

    const __m256d cu1 = _mm256_mul_pd(
        _mm256_sub_pd(_mm256_mul_pd(g22, b1), _mm256_mul_pd(g12, b2)),
        inv_det);
    const __m256d cu2 = _mm256_mul_pd(
        _mm256_sub_pd(_mm256_mul_pd(g11, b2), _mm256_mul_pd(g12, b1)),
        inv_det);
    const __m256d interior = _mm256_and_pd(
        _mm256_and_pd(_mm256_cmp_pd(cu1, zero, _CMP_GE_OQ),
                      _mm256_cmp_pd(cu2, zero, _CMP_GE_OQ)),
        det_mask);

    const __m256d x1 = _mm256_max_pd(_mm256_mul_pd(b1, inv_g11), zero);
    const __m256d x2 = _mm256_max_pd(_mm256_mul_pd(b2, inv_g22), zero);
    const __m256d f1 = _mm256_sub_pd(
        _mm256_mul_pd(half,
                      _mm256_mul_pd(_mm256_mul_pd(g11, x1), x1)),
        _mm256_mul_pd(b1, x1));
    const __m256d f2 = _mm256_sub_pd(
        _mm256_mul_pd(half,
                      _mm256_mul_pd(_mm256_mul_pd(g22, x2), x2)),
        _mm256_mul_pd(b2, x2));
    const __m256d axis1 = _mm256_cmp_pd(f1, f2, _CMP_LE_OQ);

    const __m256d axis_c1 = _mm256_blendv_pd(zero, x1, axis1);
    const __m256d axis_c2 = _mm256_blendv_pd(x2, zero, axis1);
    const __m256d c1 = _mm256_blendv_pd(axis_c1, cu1, interior);
    const __m256d c2 = _mm256_blendv_pd(axis_c2, cu2, interior);

    // Interleave back to (H,E) pairs.
    const __m256d lo = _mm256_unpacklo_pd(c1, c2);  // c1_0 c2_0 c1_2 c2_2
    const __m256d hi = _mm256_unpackhi_pd(c1, c2);  // c1_1 c2_1 c1_3 c2_3
    _mm256_storeu_pd(conc + 2 * i, _mm256_permute2f128_pd(lo, hi, 0x20));
    _mm256_storeu_pd(conc + 2 * i + 4, _mm256_permute2f128_pd(lo, hi, 0x31));
  }
  for (; i < n_pixels; ++i) {
    nnls2_pixel(g, od[3 * i], od[3 * i + 1], od[3 * i + 2], conc[2 * i],
                conc[2 * i + 1]);
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      dot_avx2,        axpy_avx2,           sum_sq_diff_avx2,
      relu_avx2,       relu_mask_grad_avx2, perturb_pairs_avx2,
      mix2_batch_avx2, nnls2_batch_avx2,
  };
  return table;
}

}  // namespace stainkit::kernels::detail

#endif  // STAINKIT_HAVE_AVX2_BACKEND
