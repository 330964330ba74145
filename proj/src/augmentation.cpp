#include "stainkit/augmentation.hpp"

#include <stdexcept>

#include "stainkit/color_optics.hpp"
#include "stainkit/errors.hpp"
#include "stainkit/kernels.hpp"

namespace stainkit {

void validate(const PerturbParams& p) {
  if (p.sigma1 < 0.0 || p.sigma1 >= 1.0) {
    throw std::invalid_argument("perturb: sigma1 must be in [0, 1)");
  }
  if (p.sigma2 < 0.0) {
    throw std::invalid_argument("perturb: sigma2 must be >= 0");
  }
  if (p.n_augment < 1) {
    throw std::invalid_argument("perturb: n_augment must be >= 1");
  }
}

StainDraw sample_perturbation(Rng& rng, const PerturbParams& p) {
  StainDraw d;
  for (int s = 0; s < 2; ++s) {
    d.alpha[s] = rng.uniform(1.0 - p.sigma1, 1.0 + p.sigma1);
    d.beta[s] = rng.uniform(-p.sigma2, p.sigma2);
  }
  return d;
}

std::vector<StainDraw> augment_draws(const PerturbParams& p) {
  validate(p);
  std::vector<StainDraw> draws(p.n_augment);
  for (int i = 0; i < p.n_augment; ++i) {
    Rng stream(derive_seed(p.seed, {static_cast<std::uint64_t>(i)}));
    draws[i] = sample_perturbation(stream, p);
  }
  return draws;
}

ConcentrationMap perturb_concentrations(const ConcentrationMap& c,
                                        const StainDraw& d) {
  ConcentrationMap out(c.width, c.height);
  kernels::perturb_pairs(out.data.data(), c.data.data(), c.pixel_count(),
                         d.alpha[0], d.beta[0], d.alpha[1], d.beta[1]);
  return out;
}

RgbImage render_concentrations(const ConcentrationMap& c,
                               const StainMatrix& w) {
  OdImage od(c.width, c.height);
  kernels::mix2_batch(od.data.data(), c.data.data(), c.pixel_count(),
                      w.hematoxylin.data(), w.eosin.data());
  return od_to_rgb(od);
}

RgbImage reconstruct_stain(const RgbImage& img, const StainMatrix& w) {
  const OdImage od = rgb_to_od(img);
  const ConcentrationMap c = solve_concentrations(od, w);
  return render_concentrations(c, w);
}

std::vector<RgbImage> augment(const RgbImage& img, const StainMatrix& w,
                              const PerturbParams& p) {
  const std::vector<StainDraw> draws = augment_draws(p);
  const OdImage od = rgb_to_od(img);
  const ConcentrationMap c = solve_concentrations(od, w);

  std::vector<RgbImage> out;
  out.reserve(draws.size());
  for (const StainDraw& d : draws) {
    out.push_back(render_concentrations(perturb_concentrations(c, d), w));
  }
  return out;
}

RgbImage normalize_to_target(const RgbImage& img, const StainMatrix& w_src,
                             const StainMatrix& w_tgt,
                             const std::array<double, 2>& maxc_src,
                             const std::array<double, 2>& maxc_tgt) {
  for (int s = 0; s < 2; ++s) {
    if (!(maxc_src[s] > 0.0) || !(maxc_tgt[s] > 0.0)) {
      throw ZeroMaxConcentrationError(
          "normalization requires positive 99th-percentile concentrations");
    }
  }
  const OdImage od = rgb_to_od(img);
  const ConcentrationMap c = solve_concentrations(od, w_src);

  ConcentrationMap scaled(c.width, c.height);
  kernels::perturb_pairs(scaled.data.data(), c.data.data(), c.pixel_count(),
                         maxc_tgt[0] / maxc_src[0], 0.0,
                         maxc_tgt[1] / maxc_src[1], 0.0);
  return render_concentrations(scaled, w_tgt);
}

}  // namespace stainkit
