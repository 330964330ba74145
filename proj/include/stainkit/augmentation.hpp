#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stainkit/image.hpp"
#include "stainkit/rng.hpp"
#include "stainkit/stain_estimation.hpp"
#include "stainkit/stain_matrix.hpp"

// Stain augmentation (concentration scale-and-shift) and stain
// normalization to a target matrix.

namespace stainkit {

struct PerturbParams {
  double sigma1 = 0.2;  // scale half-range: alpha ~ U(1-sigma1, 1+sigma1)
  double sigma2 = 0.2;  // shift half-range: beta  ~ U(-sigma2, sigma2)
  int n_augment = 6;
  std::uint64_t seed = 42;
};

void validate(const PerturbParams& p);

// One sampled perturbation: per-stain scale and shift, index 0 = H, 1 = E.
struct StainDraw {
  std::array<double, 2> alpha{1.0, 1.0};
  std::array<double, 2> beta{0.0, 0.0};
};

// Draw order is fixed (alpha then beta, H then E) so streams are stable.
StainDraw sample_perturbation(Rng& rng, const PerturbParams& p);

// The n_augment draws of one image, each from its own stream derived from
// (p.seed, draw index). Batch callers fold the image index into p.seed
// first (derive_seed(global_seed, {image_index})).
std::vector<StainDraw> augment_draws(const PerturbParams& p);

// C'_s = max(0, alpha_s * C_s + beta_s)
ConcentrationMap perturb_concentrations(const ConcentrationMap& c,
                                        const StainDraw& d);

// W * C rendered back to 8-bit RGB.
RgbImage render_concentrations(const ConcentrationMap& c,
                               const StainMatrix& w);

// The unperturbed deconvolve/reconstruct pipeline; augmentation with
// sigma1 = sigma2 = 0 reproduces exactly this.
RgbImage reconstruct_stain(const RgbImage& img, const StainMatrix& w);

// The n_augment stain-altered versions of img under stain matrix w.
std::vector<RgbImage> augment(const RgbImage& img, const StainMatrix& w,
                              const PerturbParams& p);

// Solve under w_src, rescale per stain by maxc_tgt/maxc_src, reconstruct
// under w_tgt. Throws ZeroMaxConcentrationError when a scale is undefined.
RgbImage normalize_to_target(const RgbImage& img, const StainMatrix& w_src,
                             const StainMatrix& w_tgt,
                             const std::array<double, 2>& maxc_src,
                             const std::array<double, 2>& maxc_tgt);

}  // namespace stainkit
