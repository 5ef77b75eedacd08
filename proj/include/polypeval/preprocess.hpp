#pragma once

#include <cstdint>
#include <vector>

#include "polypeval/image.hpp"

namespace polypeval {

inline constexpr int kStandardSize = 300;

/// Bilinear resize (pixel-center aligned) to kStandardSize x kStandardSize.
/// Throws std::invalid_argument for a zero-dimension input.
Image resize_standard(const Image& img);
Image resize_bilinear(const Image& img, int out_w, int out_h);

struct AugmentationSpec {
  bool hflip = false;
  bool vflip = false;
  double brightness_delta = 0.0;  // fraction of full scale, [-0.5, 0.5]
  double contrast_gain = 1.0;     // [0.5, 2.0], pivot at mid-gray
  double blur_sigma = 0.0;        // pixels, >= 0
  double noise_sigma = 0.0;       // fraction of full scale, >= 0
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the first out-of-range field.
  void validate() const;
  bool is_neutral() const;
};

/// hflip -> vflip -> brightness -> contrast -> blur -> noise, then clamp to
/// [0, 255]. Bit-identical for equal (image, spec).
Image apply_augmentation(const Image& img, const AugmentationSpec& spec);

/// Min-max scaling of all samples to [0, 1] for numeric export. A constant
/// image maps to zeros.
std::vector<float> normalize_min_max(const Image& img);

}  // namespace polypeval
