#include "stainkit/color_optics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace stainkit {

double od_max(double i0) { return std::log10(i0); }

OdImage rgb_to_od(const RgbImage& img, double i0) {
  if (i0 <= 0.0) throw std::invalid_argument("rgb_to_od: i0 must be > 0");

  // 256 possible byte values: precompute the exact per-value OD once.
  std::array<double, 256> lut;
  for (int v = 0; v < 256; ++v) {
    const int clamped = v < 1 ? 1 : v;
    lut[v] = -std::log10(static_cast<double>(clamped) / i0);
  }

  OdImage out(img.width, img.height);
  const std::size_t n = img.data.size();
  for (std::size_t i = 0; i < n; ++i) out.data[i] = lut[img.data[i]];
  return out;
}

RgbImage od_to_rgb(const OdImage& od, double i0) {
  if (i0 <= 0.0) throw std::invalid_argument("od_to_rgb: i0 must be > 0");

  RgbImage out(od.width, od.height);
  const std::size_t n = od.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double intensity = i0 * std::pow(10.0, -od.data[i]);
    const double rounded = std::floor(intensity + 0.5);  // round half up
    const double clamped = rounded < 0.0 ? 0.0 : (rounded > 255.0 ? 255.0 : rounded);
    out.data[i] = static_cast<std::uint8_t>(clamped);
  }
  return out;
}

TissueMask tissue_mask(const OdImage& od, double od_threshold) {
  if (od_threshold < 0.0)
    throw std::invalid_argument("tissue_mask: threshold must be >= 0");

  TissueMask mask(od.width, od.height);
  const std::size_t n = od.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = od.data[3 * i];
    const double b = od.data[3 * i + 1];
    const double c = od.data[3 * i + 2];
    double m = a > b ? a : b;
    m = m > c ? m : c;
    mask.bits[i] = m > od_threshold ? 1 : 0;
  }
  return mask;
}

}  // namespace stainkit
