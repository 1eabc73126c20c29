#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hoit/data/dataset.hpp"
#include "hoit/geometry/box.hpp"

namespace hoit::eval {

// A scored human-object pair. `category` is the HOI category id
// (object * C_int + interaction).
struct Detection {
  std::string image;
  std::size_t category = 0;
  geometry::Box human_box;
  geometry::Box object_box;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

// A ground-truth pair tagged with its image and HOI category.
struct GroundTruth {
  std::string image;
  std::size_t category = 0;
  geometry::Box human_box;
  geometry::Box object_box;
};

enum class Setting { kDefault, kKnownObject };

std::string setting_name(Setting setting);
// Accepts "default" and "known-object"; throws ConfigError otherwise.
Setting parse_setting(const std::string& name);

struct CategoryAp {
  std::size_t category = 0;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;  // detections scored under the setting
  double ap = 0.0;
  bool rare = false;
};

struct ApReport {
  Setting setting = Setting::kDefault;
  std::vector<CategoryAp> categories;  // one entry per manifest category
  // Means over categories with at least one GT; 0 when the group is empty.
  double full = 0.0;
  double rare = 0.0;
  double non_rare = 0.0;
  std::size_t num_full = 0;
  std::size_t num_rare = 0;
  std::size_t num_non_rare = 0;
};

// Both boxes must overlap their counterparts with IoU strictly above 0.5.
// Image and category agreement is the caller's precondition.
bool is_true_positive(const Detection& det, const GroundTruth& gt);

// Greedy matching in descending score order (stable on ties). Each detection
// takes the unmatched GT of its image with the largest min(IoU_h, IoU_o)
// among those passing is_true_positive, lowest index on ties. Returns the
// matched GT index per detection, in input order.
std::vector<std::optional<std::size_t>> greedy_match(std::span<const Detection> dets,
                                                     std::span<const GroundTruth> gts);

// All-points interpolated AP for one category. Returns 0 when there are no GTs.
double compute_ap(std::span<const Detection> dets, std::span<const GroundTruth> gts);

// Flattens annotation records into categorized GTs.
std::vector<GroundTruth> ground_truths(std::span<const data::AnnotationRecord> records,
                                       const data::DatasetManifest& manifest);

// Throws InputError on a detection with an unknown category, a non-finite
// score or an invalid box.
ApReport compute_role_map(std::span<const Detection> dets,
                          std::span<const data::AnnotationRecord> records,
                          const data::DatasetManifest& manifest, Setting setting);

std::string detection_line(const Detection& det);
Detection parse_detection(const std::string& line);
std::vector<Detection> load_detections(const std::filesystem::path& path);
void save_detections(const std::filesystem::path& path, std::span<const Detection> dets);

// Human-readable summary followed by the per-category table.
std::string report_text(const ApReport& report, const data::DatasetManifest& manifest);
std::string report_json(const ApReport& report, const data::DatasetManifest& manifest);

}  // namespace hoit::eval
