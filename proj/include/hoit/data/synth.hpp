#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hoit/data/dataset.hpp"

namespace hoit::data {

// Interaction ids of synthetic scenes.
enum SynthInteraction : std::size_t { kHolds = 0, kKicks = 1, kFarInteracts = 2 };

// Geometric thresholds shared by the generator and the rule checker.
struct SynthRules {
  // holds: object overlaps the human by at least this fraction of its own
  // area, with its center above the lowest quarter of the human box.
  double hold_min_overlap = 0.25;
  // kicks: object center within [bottom - 0.1 h_h, bottom + h_o] and
  // horizontally overlapping the human.
  // far-interacts: pixel gap between the two boxes of at least this many
  // object diameters (largest side).
  double far_min_diameters = 1.5;
};

struct SynthSpec {
  std::size_t num_images = 20;
  std::size_t width = 64;
  std::size_t height = 64;
  // Object classes are the first num_objects entries of the shape catalog.
  std::size_t num_objects = 4;
  std::size_t min_hois = 1;
  std::size_t max_hois = 3;
  SynthRules rules;
  // Categories with fewer training pairs than this (but at least one) are
  // listed as rare in the manifest.
  std::size_t rare_threshold = 3;
  std::size_t max_attempts = 2000;

  // Throws ConfigError on an unusable spec.
  void validate() const;
};

// ball, crate, kite, bat, cone, ring; object id i is drawn as entry i.
const std::vector<std::string>& synth_shape_catalog();
const std::vector<std::string>& synth_interaction_names();

// Deterministic in (spec, seed). Records use "synthetic:<index>" images.
// A pair is tried up to max_attempts times; a pair that cannot be placed
// restarts its scene. Throws ConfigError when repeated restarts fail.
Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

// Renders a synthetic record from its annotation alone.
Image render_scene(const AnnotationRecord& record);

// The interaction rule a human/object box pair satisfies, or nullopt when
// none or more than one apply. Works from geometry only.
std::optional<std::size_t> classify_interaction(const matching::GroundTruthHoi& hoi,
                                                std::size_t width, std::size_t height,
                                                const SynthRules& rules);

// Human-readable rule violations of one record (empty when valid).
std::vector<std::string> check_record(const AnnotationRecord& record, const SynthRules& rules,
                                      std::size_t max_hois);

}  // namespace hoit::data
