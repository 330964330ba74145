#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops, provided as a scalar reference implementation
// and an AVX2 variant selected at runtime. Every kernel is restricted to
// IEEE-exact operations (mul/add/sub/div/max/compare/blend), so the two
// backends return bit-identical results; the equivalence suite asserts this
// on random inputs. Reductions use a fixed 4-way blocked accumulation order:
//
//   partial[j] += x[4i+j] * y[4i+j]          j = 0..3
//   result = (partial[0] + partial[1]) + (partial[2] + partial[3])
//   then the remaining tail elements, in index order.
//
// Clamps follow maxpd semantics: max(v, 0.0) returns +0.0 for v in
// {-0.0, +0.0, NaN}, expressed in scalar code as (v > 0.0 ? v : 0.0).
//
// Transcendental per-pixel work (the OD <-> RGB conversions) is deliberately
// not a kernel: vectorized log/exp approximations would break the bit-exact
// contract, and the conversions are table-driven anyway.

namespace stainkit::kernels {

enum class Backend { scalar, avx2 };

// Currently active backend. Resolved on first use: the STAINKIT_KERNELS
// environment variable ("scalar" or "avx2") wins, otherwise the best
// variant the CPU supports.
Backend active_backend();

// Force a backend. Returns false (and leaves the selection unchanged) if
// the CPU cannot run it.
bool set_backend(Backend b);

// True if the AVX2 variant can run on this machine.
bool avx2_supported();

// Blocked dot product (see accumulation contract above).
double dot(const double* x, const double* y, std::size_t n);

// y[i] += a * x[i]
void axpy(double* y, double a, const double* x, std::size_t n);

// Blocked sum of squared differences: sum (x[i] - y[i])^2.
double sum_sq_diff(const double* x, const double* y, std::size_t n);

// dst[i] = max(src[i], 0)
void relu(double* dst, const double* src, std::size_t n);

// g[i] = pre[i] > 0 ? g[i] : 0   (backward mask of relu)
void relu_mask_grad(double* g, const double* pre, std::size_t n);

// Interleaved (H,E) concentration pairs: dst[2i]   = max(aH*src[2i]   + bH, 0)
//                                        dst[2i+1] = max(aE*src[2i+1] + bE, 0)
// Also used for pure rescaling (b = 0) during stain normalization.
void perturb_pairs(double* dst, const double* src, std::size_t n_pairs,
                   double alpha_h, double beta_h, double alpha_e, double beta_e);

// Mix interleaved (H,E) pairs back into OD triples:
//   od[3i+c] = cH*wh[c] + cE*we[c]
void mix2_batch(double* od, const double* conc, std::size_t n_pixels,
                const double wh[3], const double we[3]);

// Precomputed Gram data of a 3x2 stain matrix for the per-pixel NNLS solve.
// Built once per matrix so both backends consume identical scalars.
struct Nnls2Gram {
  double wh[3];              // hematoxylin column
  double we[3];              // eosin column
  double g11, g12, g22;      // W^T W
  double inv_det;            // 1 / (g11*g22 - g12*g12), valid iff det_ok
  double inv_g11, inv_g22;
  bool det_ok;               // false when the columns are (near) parallel
};

Nnls2Gram make_nnls2_gram(const double wh[3], const double we[3]);

// Per-pixel nonnegative least squares argmin_{c>=0} |v - W c|^2 for OD
// triples v, closed-form case analysis:
//   1. unconstrained Cramer solve; accept if both components >= 0,
//   2. otherwise clamp each axis solution to [0, inf) and keep the
//      candidate with the smaller quadratic objective (ties -> H axis).
// od: n_pixels interleaved triples, conc: n_pixels interleaved (H,E) pairs.
void nnls2_batch(double* conc, const double* od, std::size_t n_pixels,
                 const Nnls2Gram& gram);

}  // namespace stainkit::kernels
