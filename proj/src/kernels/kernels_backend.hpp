#pragma once

#include "stainkit/kernels.hpp"

// Internal backend tables. Each entry obeys the arithmetic contract in
// kernels.hpp; dispatch picks one table at startup.

namespace stainkit::kernels::detail {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double*, double, const double*, std::size_t);
  double (*sum_sq_diff)(const double*, const double*, std::size_t);
  void (*relu)(double*, const double*, std::size_t);
  void (*relu_mask_grad)(double*, const double*, std::size_t);
  void (*perturb_pairs)(double*, const double*, std::size_t, double, double,
                        double, double);
  void (*mix2_batch)(double*, const double*, std::size_t, const double*,
                     const double*);
  void (*nnls2_batch)(double*, const double*, std::size_t, const Nnls2Gram&);
};

const KernelTable& scalar_table();

#if defined(__x86_64__) || defined(_M_X64)
#define STAINKIT_HAVE_AVX2_BACKEND 1
const KernelTable& avx2_table();
#endif

// Per-element bodies shared between the scalar loops and the SIMD tail
// handling. Operation order here is the contract the vector code mirrors;
// keep mul/add sequences explicit.

inline void perturb_pair(double& h_out, double& e_out, double h, double e,
                         double alpha_h, double beta_h, double alpha_e,
                         double beta_e) {
  const double th = h * alpha_h + beta_h;
  const double te = e * alpha_e + beta_e;
  h_out = th > 0.0 ? th : 0.0;
  e_out = te > 0.0 ? te : 0.0;
}

inline void mix2_pixel(double* od, double ch, double ce, const double* wh,
                       const double* we) {
  for (int c = 0; c < 3; ++c) {
    const double th = ch * wh[c];
    const double te = ce * we[c];
    od[c] = th + te;
  }
}

inline void nnls2_pixel(const Nnls2Gram& g, double v0, double v1, double v2,
                        double& c1, double& c2) {
  const double b1 = (g.wh[0] * v0 + g.wh[1] * v1) + g.wh[2] * v2;
  const double b2 = (g.we[0] * v0 + g.we[1] * v1) + g.we[2] * v2;

  // Unconstrained Cramer solve (discarded when infeasible).
  const double cu1 = (g.g22 * b1 - g.g12 * b2) * g.inv_det;
  const double cu2 = (g.g11 * b2 - g.g12 * b1) * g.inv_det;
  const bool interior = g.det_ok && cu1 >= 0.0 && cu2 >= 0.0;

  // Clamped axis candidates and their quadratic objectives.
  double x1 = b1 * g.inv_g11;
  x1 = x1 > 0.0 ? x1 : 0.0;
  double x2 = b2 * g.inv_g22;
  x2 = x2 > 0.0 ? x2 : 0.0;
  const double f1 = 0.5 * (g.g11 * x1 * x1) - b1 * x1;
  const double f2 = 0.5 * (g.g22 * x2 * x2) - b2 * x2;
  const bool axis1 = f1 <= f2;

  c1 = interior ? cu1 : (axis1 ? x1 : 0.0);
  c2 = interior ? cu2 : (axis1 ? 0.0 : x2);
}

}  // namespace stainkit::kernels::detail
