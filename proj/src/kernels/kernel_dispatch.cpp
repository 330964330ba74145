#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "kernels_backend.hpp"

namespace stainkit::kernels {
namespace {

using detail::KernelTable;

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

bool cpu_has_avx2() {
#ifdef STAINKIT_HAVE_AVX2_BACKEND
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) {
#ifdef STAINKIT_HAVE_AVX2_BACKEND
  if (b == Backend::avx2) return &detail::avx2_table();
#endif
  (void)b;
  return &detail::scalar_table();
}

const KernelTable& resolve() {
  const KernelTable* t = g_table.load(std::memory_order_acquire);
  if (t) return *t;

  Backend pick = cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
  if (const char* env = std::getenv("STAINKIT_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) pick = Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) pick = Backend::avx2;
  }
  g_backend.store(pick, std::memory_order_relaxed);
  g_table.store(table_for(pick), std::memory_order_release);
  return *g_table.load(std::memory_order_acquire);
}

}  // namespace

Backend active_backend() {
  resolve();
  return g_backend.load(std::memory_order_relaxed);
}

bool avx2_supported() { return cpu_has_avx2(); }

bool set_backend(Backend b) {
  if (b == Backend::avx2 && !cpu_has_avx2()) return false;
  g_backend.store(b, std::memory_order_relaxed);
  g_table.store(table_for(b), std::memory_order_release);
  return true;
}

double dot(const double* x, const double* y, std::size_t n) {
  return resolve().dot(x, y, n);
}

void axpy(double* y, double a, const double* x, std::size_t n) {
  resolve().axpy(y, a, x, n);
}

double sum_sq_diff(const double* x, const double* y, std::size_t n) {
  return resolve().sum_sq_diff(x, y, n);
}

void relu(double* dst, const double* src, std::size_t n) {
  resolve().relu(dst, src, n);
}

void relu_mask_grad(double* g, const double* pre, std::size_t n) {
  resolve().relu_mask_grad(g, pre, n);
}

void perturb_pairs(double* dst, const double* src, std::size_t n_pairs,
                   double alpha_h, double beta_h, double alpha_e,
                   double beta_e) {
  resolve().perturb_pairs(dst, src, n_pairs, alpha_h, beta_h, alpha_e, beta_e);
}

void mix2_batch(double* od, const double* conc, std::size_t n_pixels,
                const double wh[3], const double we[3]) {
  resolve().mix2_batch(od, conc, n_pixels, wh, we);
}

Nnls2Gram make_nnls2_gram(const double wh[3], const double we[3]) {
  Nnls2Gram g{};
  for (int c = 0; c < 3; ++c) {
    g.wh[c] = wh[c];
    g.we[c] = we[c];
  }
  g.g11 = (wh[0] * wh[0] + wh[1] * wh[1]) + wh[2] * wh[2];
  g.g22 = (we[0] * we[0] + we[1] * we[1]) + we[2] * we[2];
  g.g12 = (wh[0] * we[0] + wh[1] * we[1]) + wh[2] * we[2];
  const double det = g.g11 * g.g22 - g.g12 * g.g12;
  g.inv_det = 1.0 / det;
  g.inv_g11 = 1.0 / g.g11;
  g.inv_g22 = 1.0 / g.g22;
  g.det_ok = std::isfinite(det) && det > 1e-12 * (g.g11 * g.g22);
  return g;
}

void nnls2_batch(double* conc, const double* od, std::size_t n_pixels,
                 const Nnls2Gram& gram) {
  resolve().nnls2_batch(conc, od, n_pixels, gram);
}

}  // namespace stainkit::kernels
