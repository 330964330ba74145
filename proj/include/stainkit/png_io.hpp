#pragma once

#include <string>

#include "stainkit/image.hpp"

// PNG is the only image format. Files load as 8-bit RGB: palette and
// grayscale images are expanded, 16-bit channels are reduced to 8, and an
// alpha channel, if present, is dropped.

namespace stainkit {

RgbImage load_png(const std::string& path);

void save_png(const std::string& path, const RgbImage& img);

}  // namespace stainkit
