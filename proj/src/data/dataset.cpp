#include "hoit/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hoit/data/synth.hpp"
#include "hoit/errors.hpp"

namespace hoit::data {

using nlohmann::ordered_json;

bool DatasetManifest::is_rare(std::size_t category) const {
  return std::find(rare_categories.begin(), rare_categories.end(), category) !=
         rare_categories.end();
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed for " + path.string());
}

ordered_json box_json(const geometry::Box& b) { return {b.cx, b.cy, b.w, b.h}; }

geometry::Box parse_box(const ordered_json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [cx, cy, w, h]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

bool touches_unit_square(const geometry::Box& b) {
  const auto c = geometry::to_corners(b);
  return c.x2 > 0.0 && c.x1 < 1.0 && c.y2 > 0.0 && c.y1 < 1.0;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& m) {
  ordered_json j = {{"objects", m.object_names},
                    {"interactions", m.interaction_names},
                    {"rare", m.rare_categories}};
  return j.dump(2) + "\n";
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_text(path, manifest_to_json(manifest));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m;
  try {
    const auto j = ordered_json::parse(read_text(path));
    m.object_names = j.at("objects").get<std::vector<std::string>>();
    m.interaction_names = j.at("interactions").get<std::vector<std::string>>();
    if (j.contains("rare")) m.rare_categories = j.at("rare").get<std::vector<std::size_t>>();
  } catch (const ordered_json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (m.object_names.empty() || m.interaction_names.empty()) {
    throw InputError(path.string() + ": manifest needs at least one object and one interaction");
  }
  for (std::size_t id : m.rare_categories) {
    if (id >= m.num_categories()) {
      throw InputError(path.string() + ": rare category " + std::to_string(id) +
                       " is outside [0, " + std::to_string(m.num_categories()) + ")");
    }
  }
  return m;
}

std::string annotation_line(const AnnotationRecord& r) {
  ordered_json hois = ordered_json::array();
  for (const auto& h : r.hois) {
    hois.push_back({{"human_box", box_json(h.human_box)},
                    {"object_box", box_json(h.object_box)},
                    {"object", h.object_class},
                    {"interaction", h.interaction_class}});
  }
  ordered_json j = {{"image", r.image}, {"width", r.width}, {"height", r.height}, {"hois", hois}};
  return j.dump();
}

void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records) {
  std::string text;
  for (const auto& r : records) text += annotation_line(r) + "\n";
  write_text(path, text);
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               const DatasetManifest& manifest) {
  std::istringstream in(read_text(path));
  const auto root = path.parent_path();
  std::vector<AnnotationRecord> records;
  std::vector<std::string> problems;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
      continue;
    }
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    AnnotationRecord r;
    try {
      const auto j = ordered_json::parse(line);
      r.image = j.at("image").get<std::string>();
      r.width = j.at("width").get<std::size_t>();
      r.height = j.at("height").get<std::size_t>();
      for (const auto& h : j.at("hois")) {
        matching::GroundTruthHoi g;
        g.human_box = parse_box(h.at("human_box"));
        g.object_box = parse_box(h.at("object_box"));
        g.object_class = h.at("object").get<std::size_t>();
        g.interaction_class = h.at("interaction").get<std::size_t>();
        r.hois.push_back(g);
      }
    } catch (const std::exception& e) {
      problems.push_back(where + ": malformed record (" + e.what() + ")");
      continue;
    }
    const std::string label = where + " (" + r.image + ")";
    const std::size_t before = problems.size();
    if (r.width == 0 || r.height == 0) problems.push_back(label + ": image size must be positive");
    for (std::size_t k = 0; k < r.hois.size(); ++k) {
      const auto& g = r.hois[k];
      const std::string hoi = label + " hoi " + std::to_string(k);
      if (g.object_class >= manifest.num_objects()) {
        problems.push_back(hoi + ": unknown object id " + std::to_string(g.object_class));
      }
      if (g.interaction_class >= manifest.num_interactions()) {
        problems.push_back(hoi + ": unknown interaction id " + std::to_string(g.interaction_class));
      }
      for (const auto& [name, box] : {std::pair{"human_box", g.human_box}, std::pair{"object_box", g.object_box}}) {
        if (!geometry::is_valid(box)) {
          problems.push_back(hoi + ": degenerate " + std::string(name));
        } else if (!touches_unit_square(box)) {
          problems.push_back(hoi + ": " + std::string(name) + " lies outside the image");
        }
      }
    }
    if (r.image.rfind(kSyntheticPrefix, 0) != 0 && !std::filesystem::exists(root / r.image)) {
      problems.push_back(label + ": missing image file");
    }
    if (problems.size() == before) records.push_back(std::move(r));
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": " + std::to_string(problems.size()) + " invalid record(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InputError(msg);
  }
  return records;
}

Dataset load_dataset(const std::filesystem::path& annotations,
                     const std::filesystem::path& manifest) {
  Dataset d;
  d.manifest = load_manifest(manifest);
  d.records = load_annotations(annotations, d.manifest);
  d.root = annotations.parent_path();
  return d;
}

Sample load_sample(const Dataset& dataset, std::size_t index) {
  const auto& r = dataset.records.at(index);
  Sample s;
  s.id = r.image;
  s.hois = r.hois;
  if (r.image.rfind(kSyntheticPrefix, 0) == 0) {
    s.image = render_scene(r);
  } else {
    s.image = read_ppm(dataset.root / r.image);
  }
  if (s.image.width != r.width || s.image.height != r.height) {
    s.image = resize_bilinear(s.image, r.width, r.height);
  }
  return s;
}

}  // namespace hoit::data
