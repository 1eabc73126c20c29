#include "hoit/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>

#include "hoit/errors.hpp"

namespace hoit::data {

namespace {

using Rgb = std::array<double, 3>;

// Pixel-space rectangle [x1, x2) x [y1, y2).
struct Rect {
  double x1, y1, x2, y2;
  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

Rect to_pixels(const geometry::Box& b, std::size_t width, std::size_t height) {
  const auto c = geometry::to_corners(b);
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  return {c.x1 * W, c.y1 * H, c.x2 * W, c.y2 * H};
}

geometry::Box to_box(const Rect& r, std::size_t width, std::size_t height) {
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  return geometry::from_corners({r.x1 / W, r.y1 / H, r.x2 / W, r.y2 / H});
}

double rect_gap(const Rect& a, const Rect& b) {
  const double dx = std::max({0.0, b.x1 - a.x2, a.x1 - b.x2});
  const double dy = std::max({0.0, b.y1 - a.y2, a.y1 - b.y2});
  return std::hypot(dx, dy);
}

double overlap_area(const Rect& a, const Rect& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

const Rgb kBackground{0.86, 0.86, 0.82};
const Rgb kBody{0.20, 0.30, 0.80};
const Rgb kHead{0.95, 0.75, 0.60};
const Rgb kTether{0.25, 0.25, 0.25};
const std::array<Rgb, 6> kObjectColors{{{0.90, 0.15, 0.15},
                                        {0.15, 0.65, 0.20},
                                        {0.95, 0.85, 0.10},
                                        {0.75, 0.20, 0.75},
                                        {0.10, 0.75, 0.80},
                                        {0.95, 0.55, 0.10}}};

void put(Image& img, long x, long y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) {
    return;
  }
  for (std::size_t k = 0; k < 3; ++k) img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), k) = c[k];
}

// Paints every pixel whose center satisfies `inside(u, v)`, where (u, v) are
// the center's coordinates relative to the rect, scaled to [-1, 1].
template <typename Pred>
void fill_shape(Image& img, const Rect& r, const Rgb& color, Pred inside) {
  const long x0 = static_cast<long>(std::floor(r.x1)), x1 = static_cast<long>(std::ceil(r.x2));
  const long y0 = static_cast<long>(std::floor(r.y1)), y1 = static_cast<long>(std::ceil(r.y2));
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      if (px < r.x1 || px >= r.x2 || py < r.y1 || py >= r.y2) continue;
      const double u = (px - r.cx()) / (0.5 * r.w());
      const double v = (py - r.cy()) / (0.5 * r.h());
      if (inside(u, v)) put(img, x, y, color);
    }
  }
}

void draw_line(Image& img, double xa, double ya, double xb, double yb, const Rgb& color) {
  const double len = std::hypot(xb - xa, yb - ya);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put(img, static_cast<long>(std::floor(xa + t * (xb - xa))),
        static_cast<long>(std::floor(ya + t * (yb - ya))), color);
  }
}

void draw_human(Image& img, const Rect& r) {
  const Rect body{r.x1, r.y1 + 0.3 * r.h(), r.x2, r.y2};
  fill_shape(img, body, kBody, [](double, double) { return true; });
  const double radius = std::min(0.15 * r.h(), 0.5 * r.w());
  const Rect head{r.cx() - radius, r.y1 + 0.15 * r.h() - radius, r.cx() + radius,
                  r.y1 + 0.15 * r.h() + radius};
  fill_shape(img, head, kHead, [](double u, double v) { return u * u + v * v <= 1.0; });
}

void draw_object(Image& img, const Rect& r, std::size_t cls) {
  const Rgb& color = kObjectColors[cls % kObjectColors.size()];
  switch (cls % kObjectColors.size()) {
    case 0:  // ball
      fill_shape(img, r, color, [](double u, double v) { return u * u + v * v <= 1.0; });
      break;
    case 1:  // crate
    case 3:  // bat
      fill_shape(img, r, color, [](double, double) { return true; });
      break;
    case 2:  // kite
      fill_shape(img, r, color, [](double u, double v) { return std::fabs(u) + std::fabs(v) <= 1.0; });
      break;
    case 4:  // cone
      fill_shape(img, r, color, [](double u, double v) { return std::fabs(u) <= 0.5 * (v + 1.0); });
      break;
    default:  // ring
      fill_shape(img, r, color, [](double u, double v) {
        const double d = u * u + v * v;
        return d <= 1.0 && d >= 0.3;
      });
      break;
  }
}

}  // namespace

const std::vector<std::string>& synth_shape_catalog() {
  static const std::vector<std::string> names{"ball", "crate", "kite", "bat", "cone", "ring"};
  return names;
}

const std::vector<std::string>& synth_interaction_names() {
  static const std::vector<std::string> names{"holds", "kicks", "far_interacts"};
  return names;
}

void SynthSpec::validate() const {
  if (num_images == 0) throw ConfigError("synth.num_images: must be positive");
  if (width < 32 || height < 32) throw ConfigError("synth.width/height: must be at least 32");
  if (num_objects == 0 || num_objects > synth_shape_catalog().size()) {
    throw ConfigError("synth.num_objects: must lie in [1, " +
                      std::to_string(synth_shape_catalog().size()) + "]");
  }
  if (min_hois > max_hois) throw ConfigError("synth.min_hois: exceeds max_hois");
  if (max_hois == 0) throw ConfigError("synth.max_hois: must be positive");
  if (!(rules.far_min_diameters > 0.0)) throw ConfigError("synth.far_min_diameters: must be positive");
  if (!(rules.hold_min_overlap > 0.0 && rules.hold_min_overlap < 0.4)) {
    throw ConfigError("synth.hold_min_overlap: must lie in (0, 0.4)");
  }
}

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  constexpr std::size_t kSceneRestarts = 20;
  const double W = static_cast<double>(spec.width), H = static_cast<double>(spec.height);
  const double unit = std::min(W, H) / 64.0;

  Dataset d;
  d.manifest.object_names.assign(synth_shape_catalog().begin(),
                                 synth_shape_catalog().begin() + static_cast<std::ptrdiff_t>(spec.num_objects));
  d.manifest.interaction_names = synth_interaction_names();
  const std::size_t num_int = d.manifest.num_interactions();

  for (std::size_t i = 0; i < spec.num_images; ++i) {
    AnnotationRecord rec;
    rec.image = std::string(kSyntheticPrefix) + std::to_string(i);
    rec.width = spec.width;
    rec.height = spec.height;
    const std::size_t count = pick(spec.min_hois, spec.max_hois);
    // A pair that finds no room restarts the whole scene, since earlier
    // pairs may have crowded the canvas.
    bool complete = false;
    for (std::size_t restart = 0; restart < kSceneRestarts && !complete; ++restart) {
      rec.hois.clear();
      std::vector<Rect> placed;
      complete = true;
      for (std::size_t k = 0; k < count && complete; ++k) {
        const std::size_t obj = pick(0, spec.num_objects - 1);
        const std::size_t act = pick(0, num_int - 1);
        bool ok = false;
        for (std::size_t attempt = 0; attempt < spec.max_attempts && !ok; ++attempt) {
          const double hw = std::round(uniform(10, 14) * unit);
          const double hh = std::round(uniform(22, 28) * unit);
          const double s = uniform(7, 10) * unit;
          const double ow = std::round(obj == 3 ? 1.6 * s : s);
          const double oh = std::round(obj == 3 ? std::max(3.0 * unit, 0.5 * s) : s);
          const double hx1 = std::round(uniform(0, W - hw));
          const double hy1 = std::round(uniform(0, H - hh));
          const Rect human{hx1, hy1, hx1 + hw, hy1 + hh};
          double ocx = 0, ocy = 0;
          if (act == kHolds) {
            const double side = pick(0, 1) ? 1.0 : -1.0;
            ocx = human.cx() + side * uniform(0.3, 0.5) * hw;
            ocy = human.cy() - uniform(0.0, 0.15) * hh;
          } else if (act == kKicks) {
            ocx = human.cx() + uniform(-0.3, 0.3) * hw;
            ocy = human.y2 + uniform(0.0, 0.5) * oh;
          } else {
            ocx = uniform(0.5 * ow, W - 0.5 * ow);
            ocy = uniform(0.5 * oh, H - 0.5 * oh);
          }
          const double ox1 = std::round(ocx - 0.5 * ow), oy1 = std::round(ocy - 0.5 * oh);
          const Rect object{ox1, oy1, ox1 + ow, oy1 + oh};
          if (object.x1 < 0 || object.y1 < 0 || object.x2 > W || object.y2 > H) continue;
          if (act == kFarInteracts &&
              rect_gap(human, object) < (spec.rules.far_min_diameters + 0.1) * std::max(ow, oh)) {
            continue;
          }
          const double margin = 2.0 * unit;
          const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Rect& p) {
            return rect_gap(p, human) >= margin && rect_gap(p, object) >= margin;
          });
          if (!clear) continue;
          placed.push_back(human);
          placed.push_back(object);
          rec.hois.push_back({obj, act, to_box(human, spec.width, spec.height),
                              to_box(object, spec.width, spec.height)});
          ok = true;
        }
        complete = ok;
      }
    }
    if (!complete) {
      throw ConfigError("synth: could not place " + std::to_string(count) + " pairs in image " +
                        std::to_string(i) + " within " + std::to_string(kSceneRestarts) + " scene restarts of " +
                        std::to_string(spec.max_attempts) + " attempts per pair; lower max_hois or enlarge the image");
    }
    d.records.push_back(std::move(rec));
  }

  std::map<std::size_t, std::size_t> counts;
  for (const auto& r : d.records) {
    for (const auto& h : r.hois) ++counts[d.manifest.category(h.object_class, h.interaction_class)];
  }
  for (const auto& [cat, n] : counts) {
    if (n < spec.rare_threshold) d.manifest.rare_categories.push_back(cat);
  }
  return d;
}

Image render_scene(const AnnotationRecord& record) {
  Image img(record.width, record.height);
  for (std::size_t p = 0; p < record.width * record.height; ++p) {
    for (std::size_t k = 0; k < 3; ++k) img.pixels[p * 3 + k] = kBackground[k];
  }
  std::vector<std::pair<Rect, Rect>> rects;
  for (const auto& h : record.hois) {
    rects.emplace_back(to_pixels(h.human_box, record.width, record.height),
                       to_pixels(h.object_box, record.width, record.height));
  }
  for (std::size_t i = 0; i < rects.size(); ++i) {
    if (record.hois[i].interaction_class == kFarInteracts) {
      const auto& [hr, orr] = rects[i];
      draw_line(img, hr.cx(), hr.cy(), orr.cx(), orr.cy(), kTether);
    }
  }
  for (const auto& [hr, orr] : rects) draw_human(img, hr);
  for (std::size_t i = 0; i < rects.size(); ++i) {
    draw_object(img, rects[i].second, record.hois[i].object_class);
  }
  return img;
}

std::optional<std::size_t> classify_interaction(const matching::GroundTruthHoi& hoi,
                                                std::size_t width, std::size_t height,
                                                const SynthRules& rules) {
  const Rect h = to_pixels(hoi.human_box, width, height);
  const Rect o = to_pixels(hoi.object_box, width, height);
  const double tol = 1e-9;
  const bool holds = overlap_area(h, o) >= rules.hold_min_overlap * o.w() * o.h() - tol &&
                     o.cy() < h.y2 - 0.25 * h.h();
  const bool horizontally_near = std::fabs(o.cx() - h.cx()) <= 0.5 * (h.w() + o.w()) + tol;
  const bool kicks = horizontally_near && o.cy() >= h.y2 - 0.1 * h.h() - tol &&
                     o.cy() <= h.y2 + o.h() + tol;
  const bool far = rect_gap(h, o) >= rules.far_min_diameters * std::max(o.w(), o.h()) - tol;
  const int n = int(holds) + int(kicks) + int(far);
  if (n != 1) return std::nullopt;
  return holds ? kHolds : kicks ? kKicks : kFarInteracts;
}

std::vector<std::string> check_record(const AnnotationRecord& record, const SynthRules& rules,
                                      std::size_t max_hois) {
  std::vector<std::string> issues;
  if (record.hois.size() > max_hois) {
    issues.push_back(record.image + ": " + std::to_string(record.hois.size()) +
                     " pairs exceed the limit of " + std::to_string(max_hois));
  }
  for (std::size_t k = 0; k < record.hois.size(); ++k) {
    const auto& h = record.hois[k];
    const auto rule = classify_interaction(h, record.width, record.height, rules);
    if (!rule || *rule != h.interaction_class) {
      const auto& names = synth_interaction_names();
      issues.push_back(record.image + " pair " + std::to_string(k) + ": labelled " +
                       (h.interaction_class < names.size() ? names[h.interaction_class] : "?") +
                       " but geometry matches " + (rule ? names[*rule] : std::string("no unique rule")));
    }
  }
  return issues;
}

}  // namespace hoit::data
