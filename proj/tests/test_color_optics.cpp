#include <doctest.h>

#include <cmath>

#include "stainkit/color_optics.hpp"
#include "stainkit/rng.hpp"

using namespace stainkit;

namespace {

RgbImage random_image(Rng& rng, int w, int h, int lo = 0, int hi = 255) {
  RgbImage img(w, h);
  for (auto& v : img.data) {
    v = static_cast<std::uint8_t>(lo + rng.below(hi - lo + 1));
  }
  return img;
}

}  // namespace

TEST_SUITE_BEGIN("color_optics");

TEST_CASE("rgb_to_od reference values") {
  RgbImage img(3, 1);
  img.data = {255, 1, 128, 255, 255, 255, 0, 10, 200};
  const OdImage od = rgb_to_od(img);

  CHECK(od.data[0] == 0.0);  // I = 255 -> OD = 0 exactly
  // -log10(1/255), via an independent high-precision evaluation
  CHECK(od.data[1] == doctest::Approx(2.4065401804339552).epsilon(1e-12));
  // -log10(128/255)
  CHECK(od.data[2] == doctest::Approx(0.2993302107860868).epsilon(1e-12));
  // the zero-intensity clamp: I = 0 behaves as I = 1
  CHECK(od.data[6] == od.data[1]);
  CHECK(od_max() == doctest::Approx(std::log10(255.0)));
  for (double v : od.data) {
    CHECK(v >= 0.0);
    CHECK(v <= od_max() + 1e-15);
  }
}

TEST_CASE("od_to_rgb reference values and rounding rule") {
  OdImage od(3, 1);
  od.data = {0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 3.5, 0.0, 0.0};
  const RgbImage img = od_to_rgb(od);
  CHECK(img.data[0] == 255);  // 10^0
  CHECK(img.data[1] == 26);   // 255 * 0.1 = 25.5, round half up
  CHECK(img.data[2] == 81);   // 255 * 10^-0.5 = 80.64
  CHECK(img.data[6] == 0);    // clamps at zero
}

TEST_CASE("round trip is exact for channels >= 1") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(24));
    const int h = 1 + static_cast<int>(rng.below(24));
    const RgbImage img = random_image(rng, w, h, 1, 255);
    const RgbImage back = od_to_rgb(rgb_to_od(img));
    REQUIRE(back == img);
  }
}

TEST_CASE("zero channels come back as 1") {
  RgbImage img(1, 1);
  img.data = {0, 0, 0};
  const RgbImage back = od_to_rgb(rgb_to_od(img));
  CHECK(back.data[0] == 1);
  CHECK(back.data[1] == 1);
  CHECK(back.data[2] == 1);
}

TEST_CASE("OD is strictly decreasing in intensity") {
  RgbImage img(255, 1);
  for (int i = 0; i < 255; ++i) {
    img.data[3 * i] = static_cast<std::uint8_t>(i + 1);
    img.data[3 * i + 1] = 1;
    img.data[3 * i + 2] = 1;
  }
  const OdImage od = rgb_to_od(img);
  for (int i = 1; i < 255; ++i) {
    CHECK(od.data[3 * i] < od.data[3 * (i - 1)]);
  }
}

TEST_CASE("tissue mask thresholding") {
  RgbImage white(4, 4);  // OD = 0 everywhere
  const OdImage od_white = rgb_to_od(white);
  CHECK(tissue_mask(od_white).tissue_count() == 0);
  CHECK(tissue_mask(od_white, 0.0).tissue_count() == 0);  // strict >

  OdImage od(2, 1);
  od.data = {0.5, 0.1, 0.1, 0.12, 0.12, 0.12};
  const TissueMask mask = tissue_mask(od, 0.15);
  CHECK(mask.bits[0] == 1);  // max channel 0.5 > 0.15
  CHECK(mask.bits[1] == 0);

  // threshold 0 marks any nonwhite pixel
  RgbImage one_dark(3, 3);
  one_dark.at(1, 1, 0) = 200;
  const TissueMask m0 = tissue_mask(rgb_to_od(one_dark), 0.0);
  CHECK(m0.tissue_count() == 1);
  CHECK(m0.bits[4] == 1);
}

TEST_CASE("raising the threshold never adds tissue") {
  Rng rng(5);
  const RgbImage img = random_image(rng, 16, 16);
  const OdImage od = rgb_to_od(img);
  double prev_thr = 0.0;
  std::size_t prev_count = tissue_mask(od, prev_thr).tissue_count();
  for (double thr : {0.05, 0.15, 0.5, 1.0, 2.0, 3.0}) {
    const std::size_t count = tissue_mask(od, thr).tissue_count();
    CHECK(count <= prev_count);
    prev_count = count;
  }
}

TEST_SUITE_END();
