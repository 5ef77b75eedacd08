#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "polypeval/image.hpp"
#include "polypeval/preprocess.hpp"
#include "support.hpp"

using namespace polypeval;

TEST_SUITE("preprocess") {

TEST_CASE("resize_standard output geometry") {
  const auto out = resize_standard(testsupport::noise_image(640, 480, 1));
  CHECK(out.width == 300);
  CHECK(out.height == 300);
  CHECK(out.pixels.size() == 300u * 300u * 3u);
}

TEST_CASE("resize_standard is the identity at 300x300") {
  const auto img = testsupport::noise_image(300, 300, 2);
  CHECK(resize_standard(img) == img);
}

TEST_CASE("1x1 input becomes a constant 300x300 image") {
  const auto out = resize_standard(Image(1, 1, {12, 200, 77}));
  REQUIRE(out.width == 300);
  for (int y = 0; y < 300; y += 37) {
    for (int x = 0; x < 300; x += 41) CHECK(out.pixel(x, y) == Rgb{12, 200, 77});
  }
}

TEST_CASE("resize rejects empty input") {
  CHECK_THROWS_AS(resize_standard(Image()), std::invalid_argument);
  CHECK_THROWS_AS(resize_bilinear(Image(4, 4), 0, 3), std::invalid_argument);
}

TEST_CASE("bilinear upscale of a two-pixel ramp interpolates linearly") {
  Image img(2, 1);
  img.set(0, 0, {0, 0, 0});
  img.set(1, 0, {200, 200, 200});
  const auto out = resize_bilinear(img, 4, 1);
  // Half-pixel centers: source x = (i + 0.5) / 2 - 0.5 -> -0.25, 0.25, 0.75, 1.25.
  CHECK(out.pixel(0, 0)[0] == 0);
  CHECK(out.pixel(1, 0)[0] == 50);
  CHECK(out.pixel(2, 0)[0] == 150);
  CHECK(out.pixel(3, 0)[0] == 200);
}

TEST_CASE("neutral spec is the identity") {
  AugmentationSpec neutral;
  CHECK(neutral.is_neutral());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto img = testsupport::noise_image(300, 300, seed);
    CHECK(apply_augmentation(img, neutral) == img);
  }
}

TEST_CASE("hflip twice restores the image") {
  const auto img = testsupport::noise_image(300, 300, 5);
  AugmentationSpec flip;
  flip.hflip = true;
  const auto once = apply_augmentation(img, flip);
  CHECK_FALSE(once == img);
  CHECK(once.pixel(0, 10) == img.pixel(299, 10));
  CHECK(apply_augmentation(once, flip) == img);
  AugmentationSpec v;
  v.vflip = true;
  CHECK(apply_augmentation(img, v).pixel(3, 0) == img.pixel(3, 299));
}

TEST_CASE("noise is deterministic under a fixed seed and differs across seeds") {
  const auto img = testsupport::noise_image(300, 300, 6);
  AugmentationSpec s;
  s.noise_sigma = 0.1;
  s.seed = 17;
  const auto a = apply_augmentation(img, s);
  const auto b = apply_augmentation(img, s);
  CHECK(image_digest(a) == image_digest(b));
  s.seed = 18;
  CHECK(image_digest(apply_augmentation(img, s)) != image_digest(a));
}

TEST_CASE("brightness and contrast follow their formulas and clamp") {
  const Image gray(300, 300, {100, 100, 100});
  AugmentationSpec s;
  s.brightness_delta = 0.2;  // +51
  CHECK(apply_augmentation(gray, s).pixel(5, 5) == Rgb{151, 151, 151});
  s.brightness_delta = 0.5;
  CHECK(apply_augmentation(Image(300, 300, {250, 0, 128}), s).pixel(0, 0) == Rgb{255, 128, 255});
  AugmentationSpec c;
  c.contrast_gain = 2.0;  // (100 - 127.5) * 2 + 127.5 = 72.5 -> 73
  CHECK(apply_augmentation(gray, c).pixel(1, 1) == Rgb{73, 73, 73});
}

TEST_CASE("blur preserves constant images and smooths an impulse") {
  AugmentationSpec s;
  s.blur_sigma = 1.5;
  const Image flat(300, 300, {90, 10, 200});
  CHECK(apply_augmentation(flat, s) == flat);
  Image dot(300, 300);
  dot.set(150, 150, {255, 255, 255});
  const auto out = apply_augmentation(dot, s);
  CHECK(out.pixel(150, 150)[0] < 255);
  CHECK(out.pixel(151, 150)[0] > 0);
  CHECK(out.pixel(151, 150) == out.pixel(149, 150));
}

TEST_CASE("augmentations keep 300x300 geometry") {
  AugmentationSpec s{true, true, 0.1, 1.3, 0.8, 0.05, 4};
  const auto out = apply_augmentation(testsupport::noise_image(300, 300, 9), s);
  CHECK(out.width == 300);
  CHECK(out.height == 300);
}

TEST_CASE("out-of-range spec fields are rejected") {
  const auto img = testsupport::noise_image(300, 300, 1);
  AugmentationSpec s;
  s.brightness_delta = 0.6;
  CHECK_THROWS_AS(apply_augmentation(img, s), std::invalid_argument);
  s = {};
  s.contrast_gain = 0.4;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.blur_sigma = -1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.noise_sigma = -0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("min-max normalization spans [0, 1]") {
  Image img(2, 1);
  img.set(0, 0, {10, 20, 30});
  img.set(1, 0, {110, 60, 10});
  const auto v = normalize_min_max(img);
  REQUIRE(v.size() == 6);
  CHECK(v[0] == doctest::Approx(0.0));
  CHECK(v[3] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(0.1));
  for (float x : normalize_min_max(Image(3, 3, {7, 7, 7}))) CHECK(x == 0.0f);
}

TEST_CASE("png encode/decode round-trips pixels") {
  const auto img = testsupport::noise_image(31, 17, 3);
  CHECK(decode_image(encode_png(img)) == img);
  CHECK(image_digest(img) == image_digest(decode_image(encode_png(img))));
}

}  // TEST_SUITE
