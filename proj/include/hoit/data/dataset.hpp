#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "hoit/data/image.hpp"
#include "hoit/matching/matching.hpp"

namespace hoit::data {

struct DatasetManifest {
  std::vector<std::string> object_names;
  std::vector<std::string> interaction_names;
  // HOI category ids (object * C_int + interaction) flagged as rare.
  std::vector<std::size_t> rare_categories;

  std::size_t num_objects() const { return object_names.size(); }
  std::size_t num_interactions() const { return interaction_names.size(); }
  std::size_t num_categories() const { return num_objects() * num_interactions(); }
  std::size_t category(std::size_t object, std::size_t interaction) const {
    return object * num_interactions() + interaction;
  }
  bool is_rare(std::size_t category) const;

  bool operator==(const DatasetManifest&) const = default;
};

// One annotation line. `image` is a path relative to the annotation file or
// "synthetic:<id>" for scenes rendered from the record itself.
struct AnnotationRecord {
  std::string image;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<matching::GroundTruthHoi> hois;

  bool operator==(const AnnotationRecord&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<AnnotationRecord> records;
  std::filesystem::path root;  // base directory for relative image paths
};

struct Sample {
  std::string id;
  Image image;
  std::vector<matching::GroundTruthHoi> hois;
};

constexpr const char* kSyntheticPrefix = "synthetic:";

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
std::string manifest_to_json(const DatasetManifest& manifest);

// Validates every record against the manifest and collects all offenders
// (with 1-based line numbers) into a single InputError.
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               const DatasetManifest& manifest);
void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records);
std::string annotation_line(const AnnotationRecord& record);

// Loads annotations and manifest; image paths resolve against the
// annotation file's directory.
Dataset load_dataset(const std::filesystem::path& annotations,
                     const std::filesystem::path& manifest);

// Reads or renders the record's image, resized to the record's size if needed.
Sample load_sample(const Dataset& dataset, std::size_t index);

}  // namespace hoit::data
