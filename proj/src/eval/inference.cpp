#include "hoit/eval/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <mutex>
#include <thread>

#include "hoit/ad/tensor.hpp"
#include "hoit/errors.hpp"

namespace hoit::eval {

std::string score_mode_name(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::kProduct: return "product";
    case ScoreMode::kInteraction: return "interaction";
    case ScoreMode::kGeometricMean: return "geometric-mean";
  }
  return "product";
}

ScoreMode parse_score_mode(const std::string& name) {
  if (name == "product") return ScoreMode::kProduct;
  if (name == "interaction") return ScoreMode::kInteraction;
  if (name == "geometric-mean") return ScoreMode::kGeometricMean;
  throw ConfigError("infer.score: expected product, interaction or geometric-mean, got '" + name + "'");
}

void InferenceConfig::validate() const {
  if (!std::isfinite(threshold)) throw ConfigError("infer.threshold: must be finite");
}

namespace {

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

// Index and probability of the best non-background class.
std::pair<std::size_t, double> best_class(const std::vector<double>& logits) {
  const auto p = softmax(logits);
  const auto it = std::max_element(p.begin(), p.end() - 1);
  return {static_cast<std::size_t>(it - p.begin()), *it};
}

}  // namespace

std::vector<Detection> decode_detections(const model::HeadOutputs& heads, const std::string& image,
                                         std::size_t num_interactions, const InferenceConfig& cfg) {
  std::vector<Detection> out;
  for (const auto& pred : heads.predictions()) {
    const double human = softmax(pred.human_logits)[0];
    const auto [object, p_object] = best_class(pred.object_logits);
    const auto [interaction, p_interaction] = best_class(pred.interaction_logits);
    double score = 0.0;
    switch (cfg.score) {
      case ScoreMode::kProduct: score = human * p_object * p_interaction; break;
      case ScoreMode::kInteraction: score = p_interaction; break;
      case ScoreMode::kGeometricMean: score = std::cbrt(human * p_object * p_interaction); break;
    }
    if (score >= cfg.threshold) {
      out.push_back({image, object * num_interactions + interaction, pred.human_box, pred.object_box, score});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (cfg.top_k > 0 && out.size() > cfg.top_k) out.resize(cfg.top_k);
  return out;
}

std::vector<Detection> detect(const model::HoiTransformer& model, const data::Image& image,
                              const std::string& image_id, const InferenceConfig& cfg) {
  ad::NoGradGuard no_grad;
  const auto out = model.forward(data::to_tensor(image));
  return decode_detections(out.heads, image_id, model.config().num_interaction_classes, cfg);
}

std::vector<Detection> detect_dataset(const model::HoiTransformer& model,
                                      const data::Dataset& dataset, const InferenceConfig& cfg,
                                      std::size_t threads) {
  const std::size_t n = dataset.records.size();
  std::vector<std::vector<Detection>> per_image(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      for (std::size_t i = next++; i < n; i = next++) {
        const auto sample = data::load_sample(dataset, i);
        per_image[i] = detect(model, sample.image, dataset.records[i].image, cfg);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = n;
    }
  };
  const std::size_t workers = std::min(worker_count(threads), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<Detection> out;
  for (auto& v : per_image) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::size_t worker_count(std::size_t requested) {
  std::size_t n = std::max<std::size_t>(requested, 1);
  if (const char* env = std::getenv("HOIT_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

}  // namespace hoit::eval
