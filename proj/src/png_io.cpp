#include "stainkit/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "stainkit/errors.hpp"

namespace stainkit {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

RgbImage load_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open for reading: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 ||
      png_sig_cmp(header, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path);
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng read init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng info init failed");
  }

  RgbImage img;
  std::vector<png_bytep> rows;
  bool failed = false;

  // libpng reports errors via longjmp; convert to an exception afterwards.
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    const png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
      png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY ||
        color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    // Alpha, whether native or expanded from tRNS, is dropped.
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.data.resize(img.pixel_count() * 3);

    rows.resize(img.height);
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    for (int y = 0; y < img.height; ++y) {
      rows[y] = img.data.data() + static_cast<std::size_t>(y) * stride;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }

  png_destroy_read_struct(&png, &info, nullptr);
  if (failed) throw IoError("failed to decode PNG: " + path);
  return img;
}

void save_png(const std::string& path, const RgbImage& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.data.size() != img.pixel_count() * 3) {
    throw IoError("save_png: image dimensions inconsistent with buffer");
  }

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw IoError("libpng write init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng info init failed");
  }

  bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, file.get());
    // Pinned compression settings keep re-runs byte-identical.
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    for (int y = 0; y < img.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(img.data.data() +
                                               static_cast<std::size_t>(y) *
                                                   stride));
    }
    png_write_end(png, nullptr);
  }

  png_destroy_write_struct(&png, &info);
  if (failed) throw IoError("failed to encode PNG: " + path);
}

}  // namespace stainkit
