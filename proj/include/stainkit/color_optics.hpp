#pragma once

#include "stainkit/image.hpp"

// RGB intensity <-> optical density conversions and tissue masking.
//
// Conventions (fixed so round trips are exact for 8-bit data):
//   OD      = -log10(max(I, 1) / i0), base-10 Beer-Lambert
//   I       = round-half-up(i0 * 10^-OD), clamped to [0, 255]
//   i0      = 255 by default
// The max(I, 1) clamp removes the log-of-zero singularity and bounds OD by
// OD_MAX = log10(255); od_to_rgb(rgb_to_od(x)) == x whenever all channels
// are >= 1.

namespace stainkit {

inline constexpr double kDefaultI0 = 255.0;
inline constexpr double kDefaultOdThreshold = 0.15;

double od_max(double i0 = kDefaultI0);

OdImage rgb_to_od(const RgbImage& img, double i0 = kDefaultI0);

RgbImage od_to_rgb(const OdImage& od, double i0 = kDefaultI0);

// A pixel is tissue iff the maximum of its three OD channels exceeds the
// threshold (strictly).
TissueMask tissue_mask(const OdImage& od,
                       double od_threshold = kDefaultOdThreshold);

}  // namespace stainkit
