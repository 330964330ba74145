#include "kernels_backend.hpp"

// Reference backend. Reductions use the blocked-4 accumulation order from
// kernels.hpp so the AVX2 lanes reproduce them bit for bit.

namespace stainkit::kernels::detail {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    p0 += x[i] * y[i];
    p1 += x[i + 1] * y[i + 1];
    p2 += x[i + 2] * y[i + 2];
    p3 += x[i + 3] * y[i + 3];
  }
  double r = (p0 + p1) + (p2 + p3);
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double t = a * x[i];
    y[i] = y[i] + t;
  }
}

double sum_sq_diff_scalar(const double* x, const double* y, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double d0 = x[i] - y[i];
    const double d1 = x[i + 1] - y[i + 1];
    const double d2 = x[i + 2] - y[i + 2];
    const double d3 = x[i + 3] - y[i + 3];
    p0 += d0 * d0;
    p1 += d1 * d1;
    p2 += d2 * d2;
    p3 += d3 * d3;
  }
  double r = (p0 + p1) + (p2 + p3);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    r += d * d;
  }
  return r;
}

void relu_scalar(double* dst, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = src[i];
    dst[i] = v > 0.0 ? v : 0.0;
  }
}

void relu_mask_grad_scalar(double* g, const double* pre, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = pre[i] > 0.0 ? g[i] : 0.0;
  }
}

void perturb_pairs_scalar(double* dst, const double* src, std::size_t n_pairs,
                          double alpha_h, double beta_h, double alpha_e,
                          double beta_e) {
  for (std::size_t i = 0; i < n_pairs; ++i) {
    perturb_pair(dst[2 * i], dst[2 * i + 1], src[2 * i], src[2 * i + 1],
                 alpha_h, beta_h, alpha_e, beta_e);
  }
}

void mix2_batch_scalar(double* od, const double* conc, std::size_t n_pixels,
                       const double* wh, const double* we) {
  for (std::size_t i = 0; i < n_pixels; ++i) {
    mix2_pixel(od + 3 * i, conc[2 * i], conc[2 * i + 1], wh, we);
  }
}

void nnls2_batch_scalar(double* conc, const double* od, std::size_t n_pixels,
                        const Nnls2Gram& g) {
  for (std::size_t i = 0; i < n_pixels; ++i) {
    nnls2_pixel(g, od[3 * i], od[3 * i + 1], od[3 * i + 2], conc[2 * i],
                conc[2 * i + 1]);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      dot_scalar,        axpy_scalar,           sum_sq_diff_scalar,
      relu_scalar,       relu_mask_grad_scalar, perturb_pairs_scalar,
      mix2_batch_scalar, nnls2_batch_scalar,
  };
  return table;
}

}  // namespace stainkit::kernels::detail
