#pragma once

#include <cstdint>
#include <vector>

namespace stainkit {

// 8-bit RGB raster, row-major interleaved triples. The unit of ingestion
// and emission; all stain math happens in OdImage instead.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // width * height * 3

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h),
        data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const RgbImage&) const = default;
};

// Per-pixel optical densities (base-10 Beer-Lambert), same layout as the
// source RgbImage.
struct OdImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // width * height * 3

  OdImage() = default;
  OdImage(int w, int h)
      : width(w), height(h),
        data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

// One flag per pixel; true = tissue.
struct TissueMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  TissueMask() = default;
  TissueMask(int w, int h)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t tissue_count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
};

}  // namespace stainkit
