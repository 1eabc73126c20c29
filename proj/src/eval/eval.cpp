#include "hoit/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "hoit/errors.hpp"

namespace hoit::eval {

using nlohmann::ordered_json;

std::string setting_name(Setting setting) {
  return setting == Setting::kDefault ? "default" : "known-object";
}

Setting parse_setting(const std::string& name) {
  if (name == "default") return Setting::kDefault;
  if (name == "known-object") return Setting::kKnownObject;
  throw ConfigError("setting: expected default or known-object, got '" + name + "'");
}

bool is_true_positive(const Detection& det, const GroundTruth& gt) {
  return geometry::iou(det.human_box, gt.human_box) > 0.5 &&
         geometry::iou(det.object_box, gt.object_box) > 0.5;
}

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

std::vector<std::optional<std::size_t>> greedy_match(std::span<const Detection> dets,
                                                     std::span<const GroundTruth> gts) {
  std::unordered_map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) by_image[gts[g].image].push_back(g);

  std::vector<bool> taken(gts.size(), false);
  std::vector<std::optional<std::size_t>> result(dets.size());
  for (std::size_t d : score_order(dets)) {
    const auto it = by_image.find(dets[d].image);
    if (it == by_image.end()) continue;
    std::optional<std::size_t> best;
    double best_overlap = -1.0;
    for (std::size_t g : it->second) {
      if (taken[g] || gts[g].category != dets[d].category || !is_true_positive(dets[d], gts[g])) {
        continue;
      }
      const double overlap = std::min(geometry::iou(dets[d].human_box, gts[g].human_box),
                                      geometry::iou(dets[d].object_box, gts[g].object_box));
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = g;
      }
    }
    if (best) {
      taken[*best] = true;
      result[d] = best;
    }
  }
  return result;
}

double compute_ap(std::span<const Detection> dets, std::span<const GroundTruth> gts) {
  if (gts.empty()) return 0.0;
  const auto matched = greedy_match(dets, gts);
  const auto order = score_order(dets);
  std::vector<double> precision, recall;
  precision.reserve(order.size());
  recall.reserve(order.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (matched[order[k]]) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

std::vector<GroundTruth> ground_truths(std::span<const data::AnnotationRecord> records,
                                       const data::DatasetManifest& manifest) {
  std::vector<GroundTruth> out;
  for (const auto& r : records) {
    for (const auto& h : r.hois) {
      out.push_back({r.image, manifest.category(h.object_class, h.interaction_class), h.human_box,
                     h.object_box});
    }
  }
  return out;
}

ApReport compute_role_map(std::span<const Detection> dets,
                          std::span<const data::AnnotationRecord> records,
                          const data::DatasetManifest& manifest, Setting setting) {
  const std::size_t C = manifest.num_categories();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    const std::string where = "detection " + std::to_string(i) + " (" + d.image + "): ";
    if (d.category >= C) {
      throw InputError(where + "unknown HOI category " + std::to_string(d.category));
    }
    if (!std::isfinite(d.score)) throw InputError(where + "non-finite score");
    if (!geometry::is_valid(d.human_box) || !geometry::is_valid(d.object_box)) {
      throw InputError(where + "invalid box");
    }
  }

  std::vector<std::vector<Detection>> det_by_cat(C);
  std::vector<std::vector<GroundTruth>> gt_by_cat(C);
  for (const auto& d : dets) det_by_cat[d.category].push_back(d);
  for (auto& g : ground_truths(records, manifest)) gt_by_cat[g.category].push_back(std::move(g));

  // Images containing each object class, for the known-object setting.
  std::vector<std::unordered_set<std::string>> images_with(manifest.num_objects());
  for (const auto& r : records) {
    for (const auto& h : r.hois) images_with[h.object_class].insert(r.image);
  }

  ApReport report;
  report.setting = setting;
  double sum_full = 0.0, sum_rare = 0.0, sum_non_rare = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    auto& cat_dets = det_by_cat[c];
    if (setting == Setting::kKnownObject) {
      const auto& allowed = images_with[c / manifest.num_interactions()];
      std::erase_if(cat_dets, [&](const Detection& d) { return !allowed.contains(d.image); });
    }
    CategoryAp entry;
    entry.category = c;
    entry.num_gt = gt_by_cat[c].size();
    entry.num_detections = cat_dets.size();
    entry.rare = manifest.is_rare(c);
    entry.ap = compute_ap(cat_dets, gt_by_cat[c]);
    if (entry.num_gt > 0) {
      sum_full += entry.ap;
      ++report.num_full;
      if (entry.rare) {
        sum_rare += entry.ap;
        ++report.num_rare;
      } else {
        sum_non_rare += entry.ap;
        ++report.num_non_rare;
      }
    }
    report.categories.push_back(entry);
  }
  auto mean = [](double s, std::size_t n) { return n ? s / static_cast<double>(n) : 0.0; };
  report.full = mean(sum_full, report.num_full);
  report.rare = mean(sum_rare, report.num_rare);
  report.non_rare = mean(sum_non_rare, report.num_non_rare);
  return report;
}

namespace {

ordered_json box_json(const geometry::Box& b) { return {b.cx, b.cy, b.w, b.h}; }

geometry::Box parse_box(const ordered_json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [cx, cy, w, h]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::string category_name(const data::DatasetManifest& m, std::size_t c) {
  return m.object_names[c / m.num_interactions()] + " " + m.interaction_names[c % m.num_interactions()];
}

}  // namespace

std::string detection_line(const Detection& det) {
  ordered_json j;
  j["image"] = det.image;
  j["hoi_category"] = det.category;
  j["human_box"] = box_json(det.human_box);
  j["object_box"] = box_json(det.object_box);
  j["score"] = det.score;
  return j.dump();
}

Detection parse_detection(const std::string& line) {
  try {
    const auto j = ordered_json::parse(line);
    Detection d;
    d.image = j.at("image").get<std::string>();
    d.category = j.at("hoi_category").get<std::size_t>();
    d.human_box = parse_box(j.at("human_box"));
    d.object_box = parse_box(j.at("object_box"));
    d.score = j.at("score").get<double>();
    return d;
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open detections file " + path.string());
  std::vector<Detection> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_detection(line));
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void save_detections(const std::filesystem::path& path, std::span<const Detection> dets) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write detections file " + path.string());
  for (const auto& d : dets) out << detection_line(d) << '\n';
}

std::string report_text(const ApReport& r, const data::DatasetManifest& m) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(4);
  s << "setting: " << setting_name(r.setting) << '\n';
  auto line = [&](const char* name, double v, std::size_t n) {
    s << name << ' ';
    if (n) s << v; else s << "n/a";
    s << "  (" << n << " categories)\n";
  };
  line("Full   ", r.full, r.num_full);
  line("Rare   ", r.rare, r.num_rare);
  line("NonRare", r.non_rare, r.num_non_rare);
  s << "\ncategory\tname\trare\tgt\tdets\tAP\n";
  for (const auto& c : r.categories) {
    if (c.num_gt == 0) continue;
    s << c.category << '\t' << category_name(m, c.category) << '\t' << (c.rare ? "yes" : "no") << '\t'
      << c.num_gt << '\t' << c.num_detections << '\t' << c.ap << '\n';
  }
  return s.str();
}

std::string report_json(const ApReport& r, const data::DatasetManifest& m) {
  ordered_json j;
  j["setting"] = setting_name(r.setting);
  j["full"] = r.full;
  j["rare"] = r.rare;
  j["non_rare"] = r.non_rare;
  j["num_full"] = r.num_full;
  j["num_rare"] = r.num_rare;
  j["num_non_rare"] = r.num_non_rare;
  ordered_json cats = ordered_json::array();
  for (const auto& c : r.categories) {
    cats.push_back({{"category", c.category},
                    {"name", category_name(m, c.category)},
                    {"rare", c.rare},
                    {"num_gt", c.num_gt},
                    {"num_detections", c.num_detections},
                    {"ap", c.num_gt ? ordered_json(c.ap) : ordered_json(nullptr)}});
  }
  j["categories"] = std::move(cats);
  return j.dump(2);
}

}  // namespace hoit::eval
