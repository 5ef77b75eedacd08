#include "polypeval/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "polypeval/rng.hpp"

namespace polypeval {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

void blur_axis(std::vector<double>& buf, int w, int h, const std::vector<double>& kernel, bool horizontal) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> out(buf.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int sx = horizontal ? std::clamp(x + k, 0, w - 1) : x;
          const int sy = horizontal ? y : std::clamp(y + k, 0, h - 1);
          acc += kernel[k + radius] * buf[(static_cast<std::size_t>(sy) * w + sx) * 3 + c];
        }
        out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
      }
    }
  }
  buf.swap(out);
}

}  // namespace

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (img.empty()) throw std::invalid_argument("cannot resize a zero-dimension image");
  if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize target must be positive");
  if (img.width == out_w && img.height == out_h) return img;

  Image out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.pixels[img.index(x0, y0) + c] * (1 - wx) + img.pixels[img.index(x1, y0) + c] * wx;
        const double bottom = img.pixels[img.index(x0, y1) + c] * (1 - wx) + img.pixels[img.index(x1, y1) + c] * wx;
        out.pixels[out.index(x, y) + c] = to_byte(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

Image resize_standard(const Image& img) { return resize_bilinear(img, kStandardSize, kStandardSize); }

void AugmentationSpec::validate() const {
  auto fail = [](const std::string& field, double v, const std::string& range) {
    throw std::invalid_argument("augmentation " + field + "=" + std::to_string(v) + " outside " + range);
  };
  if (!(brightness_delta >= -0.5 && brightness_delta <= 0.5)) fail("brightness_delta", brightness_delta, "[-0.5, 0.5]");
  if (!(contrast_gain >= 0.5 && contrast_gain <= 2.0)) fail("contrast_gain", contrast_gain, "[0.5, 2.0]");
  if (!(blur_sigma >= 0.0 && std::isfinite(blur_sigma))) fail("blur_sigma", blur_sigma, "[0, inf)");
  if (!(noise_sigma >= 0.0 && std::isfinite(noise_sigma))) fail("noise_sigma", noise_sigma, "[0, inf)");
}

bool AugmentationSpec::is_neutral() const {
  return !hflip && !vflip && brightness_delta == 0.0 && contrast_gain == 1.0 && blur_sigma == 0.0 && noise_sigma == 0.0;
}

Image apply_augmentation(const Image& img, const AugmentationSpec& spec) {
  spec.validate();
  if (spec.is_neutral()) return img;

  const int w = img.width;
  const int h = img.height;
  Image flipped = img;
  if (spec.hflip || spec.vflip) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int sx = spec.hflip ? w - 1 - x : x;
        const int sy = spec.vflip ? h - 1 - y : y;
        flipped.set(x, y, img.pixel(sx, sy));
      }
    }
  }

  std::vector<double> buf(flipped.pixels.begin(), flipped.pixels.end());
  if (spec.brightness_delta != 0.0) {
    for (auto& v : buf) v += spec.brightness_delta * 255.0;
  }
  if (spec.contrast_gain != 1.0) {
    for (auto& v : buf) v = (v - 127.5) * spec.contrast_gain + 127.5;
  }
  if (spec.blur_sigma > 0.0) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * spec.blur_sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      kernel[k + radius] = std::exp(-(k * k) / (2.0 * spec.blur_sigma * spec.blur_sigma));
      total += kernel[k + radius];
    }
    for (auto& k : kernel) k /= total;
    blur_axis(buf, w, h, kernel, true);
    blur_axis(buf, w, h, kernel, false);
  }
  if (spec.noise_sigma > 0.0) {
    PortableRng rng(spec.seed);
    for (auto& v : buf) v += rng.normal() * spec.noise_sigma * 255.0;
  }

  Image out(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = to_byte(buf[i]);
  return out;
}

std::vector<float> normalize_min_max(const Image& img) {
  std::vector<float> out(img.pixels.size(), 0.0f);
  if (img.pixels.empty()) return out;
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  if (*lo == *hi) return out;
  const float range = static_cast<float>(*hi - *lo);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(img.pixels[i] - *lo) / range;
  return out;
}

}  // namespace polypeval
