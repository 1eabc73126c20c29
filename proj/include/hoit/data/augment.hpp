#pragma once

#include <cstddef>
#include <random>

#include "hoit/data/dataset.hpp"

namespace hoit::data {

struct AugmentConfig {
  bool color = true;
  bool flip = true;
  bool scale = true;
  bool crop = true;
  double color_prob = 0.5;  // brightness and contrast are drawn independently
  double jitter_lo = 0.8;
  double jitter_hi = 1.2;
  double flip_prob = 0.5;
  // Shortest side drawn uniformly from [scale_min, scale_max], longest side
  // capped at max_size.
  std::size_t scale_min = 64;
  std::size_t scale_max = 128;
  std::size_t max_size = 160;
  double crop_prob = 0.5;
  // Crop sides are drawn from [crop_min_fraction, 1] of the image sides.
  double crop_min_fraction = 0.5;
  std::size_t crop_retries = 10;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Pixel rectangle [x, x + width) x [y, y + height).
struct CropRect {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

// x <- x * factor, clamped to [0, 1].
void adjust_brightness(Image& image, double factor);
// x <- m + factor (x - m) with m the mean intensity, clamped to [0, 1].
void adjust_contrast(Image& image, double factor);
void flip_horizontal(Sample& sample);
// Resizes so the shorter side is `shortest`, shrinking further if the longer
// side would exceed `max_size`.
void rescale_shortest(Sample& sample, std::size_t shortest, std::size_t max_size);
// Crops to `rect`. A pair is dropped when either box has zero-area overlap
// with the crop; surviving boxes are clipped and renormalized to the crop.
void crop(Sample& sample, const CropRect& rect);

// Full chain: color jitter, flip, scale jitter, random crop (followed by a
// resize back to the pre-crop shortest side). Never fails; a crop that
// would drop every pair or produce a sub-pixel box is redrawn up to
// crop_retries times and otherwise skipped.
Sample augment(Sample sample, std::mt19937_64& rng, const AugmentConfig& cfg);

}  // namespace hoit::data
