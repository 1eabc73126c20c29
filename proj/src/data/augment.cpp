#include "hoit/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hoit/errors.hpp"

namespace hoit::data {

void AugmentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("augment." + key + ": " + why);
  };
  auto prob = [&](const char* key, double p) {
    if (!(p >= 0.0 && p <= 1.0)) fail(key, "must lie in [0, 1]");
  };
  prob("color_prob", color_prob);
  prob("flip_prob", flip_prob);
  prob("crop_prob", crop_prob);
  if (!(jitter_lo > 0.0 && jitter_lo <= jitter_hi)) fail("jitter_lo", "need 0 < jitter_lo <= jitter_hi");
  if (scale_min == 0 || scale_min > scale_max) fail("scale_min", "need 0 < scale_min <= scale_max");
  if (max_size < scale_max) fail("max_size", "must be at least scale_max");
  if (!(crop_min_fraction > 0.0 && crop_min_fraction <= 1.0)) {
    fail("crop_min_fraction", "must lie in (0, 1]");
  }
}

void adjust_brightness(Image& image, double factor) {
  for (auto& p : image.pixels) p = std::clamp(p * factor, 0.0, 1.0);
}

void adjust_contrast(Image& image, double factor) {
  if (image.pixels.empty()) return;
  const double mean = std::accumulate(image.pixels.begin(), image.pixels.end(), 0.0) /
                      static_cast<double>(image.pixels.size());
  for (auto& p : image.pixels) p = std::clamp(mean + factor * (p - mean), 0.0, 1.0);
}

void flip_horizontal(Sample& s) {
  Image& img = s.image;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width / 2; ++x) {
      for (std::size_t c = 0; c < 3; ++c) std::swap(img.at(x, y, c), img.at(img.width - 1 - x, y, c));
    }
  }
  for (auto& h : s.hois) {
    h.human_box.cx = 1.0 - h.human_box.cx;
    h.object_box.cx = 1.0 - h.object_box.cx;
  }
}

void rescale_shortest(Sample& s, std::size_t shortest, std::size_t max_size) {
  const double w = static_cast<double>(s.image.width), h = static_cast<double>(s.image.height);
  double factor = static_cast<double>(shortest) / std::min(w, h);
  if (std::max(w, h) * factor > static_cast<double>(max_size)) {
    factor = static_cast<double>(max_size) / std::max(w, h);
  }
  const auto nw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(w * factor)));
  const auto nh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(h * factor)));
  // Boxes are normalized, so only the raster changes.
  s.image = resize_bilinear(s.image, nw, nh);
}

namespace {

// Returns false if the box has no positive-area overlap with the crop.
bool clip_box(geometry::Box& box, const CropRect& rect, std::size_t width, std::size_t height) {
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  const auto c = geometry::to_corners(box);
  const double cx1 = static_cast<double>(rect.x) / W;
  const double cy1 = static_cast<double>(rect.y) / H;
  const double cx2 = static_cast<double>(rect.x + rect.width) / W;
  const double cy2 = static_cast<double>(rect.y + rect.height) / H;
  const double x1 = std::max(c.x1, cx1), y1 = std::max(c.y1, cy1);
  const double x2 = std::min(c.x2, cx2), y2 = std::min(c.y2, cy2);
  if (!(x2 > x1 && y2 > y1)) return false;
  const double sw = cx2 - cx1, sh = cy2 - cy1;
  box = geometry::from_corners({(x1 - cx1) / sw, (y1 - cy1) / sh, (x2 - cx1) / sw, (y2 - cy1) / sh});
  return true;
}

}  // namespace

void crop(Sample& s, const CropRect& rect) {
  if (rect.width == 0 || rect.height == 0 || rect.x + rect.width > s.image.width ||
      rect.y + rect.height > s.image.height) {
    throw ShapeError("crop rectangle exceeds the image");
  }
  std::vector<matching::GroundTruthHoi> kept;
  for (auto h : s.hois) {
    if (clip_box(h.human_box, rect, s.image.width, s.image.height) &&
        clip_box(h.object_box, rect, s.image.width, s.image.height)) {
      kept.push_back(h);
    }
  }
  Image out(rect.width, rect.height);
  for (std::size_t y = 0; y < rect.height; ++y) {
    for (std::size_t x = 0; x < rect.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = s.image.at(rect.x + x, rect.y + y, c);
    }
  }
  s.image = std::move(out);
  s.hois = std::move(kept);
}

Sample augment(Sample s, std::mt19937_64& rng, const AugmentConfig& cfg) {
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  auto jitter = [&] { return std::uniform_real_distribution<double>(cfg.jitter_lo, cfg.jitter_hi)(rng); };

  if (cfg.color) {
    if (coin(cfg.color_prob)) adjust_brightness(s.image, jitter());
    if (coin(cfg.color_prob)) adjust_contrast(s.image, jitter());
  }
  if (cfg.flip && coin(cfg.flip_prob)) flip_horizontal(s);
  if (cfg.scale) {
    const auto side = std::uniform_int_distribution<std::size_t>(cfg.scale_min, cfg.scale_max)(rng);
    rescale_shortest(s, side, cfg.max_size);
  }
  if (cfg.crop && coin(cfg.crop_prob)) {
    const std::size_t shortest = std::min(s.image.width, s.image.height);
    const std::size_t longest = std::max(s.image.width, s.image.height);
    for (std::size_t attempt = 0; attempt < cfg.crop_retries; ++attempt) {
      std::uniform_real_distribution<double> frac(cfg.crop_min_fraction, 1.0);
      CropRect r;
      r.width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac(rng) * static_cast<double>(s.image.width))));
      r.height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac(rng) * static_cast<double>(s.image.height))));
      r.x = std::uniform_int_distribution<std::size_t>(0, s.image.width - r.width)(rng);
      r.y = std::uniform_int_distribution<std::size_t>(0, s.image.height - r.height)(rng);
      Sample trial = s;
      crop(trial, r);
      const bool emptied = !s.hois.empty() && trial.hois.empty();
      const bool tiny = std::any_of(trial.hois.begin(), trial.hois.end(), [&](const auto& h) {
        return h.human_box.w * static_cast<double>(r.width) < 1.0 ||
               h.human_box.h * static_cast<double>(r.height) < 1.0 ||
               h.object_box.w * static_cast<double>(r.width) < 1.0 ||
               h.object_box.h * static_cast<double>(r.height) < 1.0;
      });
      if (emptied || tiny) continue;
      const std::size_t cap = cfg.scale ? cfg.max_size : longest;
      rescale_shortest(trial, shortest, cap);
      s = std::move(trial);
      break;
    }
  }
  return s;
}

}  // namespace hoit::data
