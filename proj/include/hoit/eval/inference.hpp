#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hoit/data/dataset.hpp"
#include "hoit/eval/eval.hpp"
#include "hoit/model/hoi_transformer.hpp"

namespace hoit::eval {

// How a query's ranking score is formed from its branch confidences.
enum class ScoreMode {
  kProduct,        // P(human) * max P(object) * max P(interaction)
  kInteraction,    // max P(interaction)
  kGeometricMean,  // cube root of the product
};

std::string score_mode_name(ScoreMode mode);
// Accepts "product", "interaction" and "geometric-mean".
ScoreMode parse_score_mode(const std::string& name);

struct InferenceConfig {
  double threshold = 0.1;  // keep queries with score >= threshold
  std::size_t top_k = 0;   // at most this many per image; 0 keeps all
  ScoreMode score = ScoreMode::kProduct;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Turns head outputs into detections sorted by descending score (query index
// on ties). Class maxima exclude the background logit.
std::vector<Detection> decode_detections(const model::HeadOutputs& heads, const std::string& image,
                                         std::size_t num_interactions, const InferenceConfig& cfg);

std::vector<Detection> detect(const model::HoiTransformer& model, const data::Image& image,
                              const std::string& image_id, const InferenceConfig& cfg);

// Runs every record of the dataset, optionally on several threads. The
// output is ordered by record index regardless of the thread count.
std::vector<Detection> detect_dataset(const model::HoiTransformer& model,
                                      const data::Dataset& dataset, const InferenceConfig& cfg,
                                      std::size_t threads = 1);

// `requested` capped by HOIT_THREADS when set, and at least 1.
std::size_t worker_count(std::size_t requested);

}  // namespace hoit::eval
