#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hoit/ad/checkpoint.hpp"
#include "hoit/ad/optim.hpp"
#include "hoit/data/augment.hpp"
#include "hoit/data/dataset.hpp"
#include "hoit/errors.hpp"
#include "hoit/matching/matching.hpp"
#include "hoit/model/hoi_transformer.hpp"

namespace hoit::train {

struct TrainConfig {
  std::size_t epochs = 250;
  // Both learning rates are multiplied by 0.1 from this epoch on (0-based).
  // Setting it to `epochs` keeps the rates constant.
  std::size_t lr_drop = 200;
  double lr_transformer = 1e-4;
  double lr_backbone = 1e-5;
  double weight_decay = 1e-4;
  double clip_norm = 0.1;  // 0 disables clipping
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;
  // Evaluate every this many epochs and after the last one; 0 evaluates only
  // at the end.
  std::size_t eval_interval = 10;
  // Stop after an evaluation reaching this mAP; 0 disables early stopping.
  double target_map = 0.0;
  bool augment = true;
  data::AugmentConfig augmentation;
  matching::MatchWeights weights;

  // Throws ConfigError naming the offending field ("train.<key>").
  void validate() const;
  std::string to_json() const;
  // Accepts either the train object itself or a document with a "train" key.
  static TrainConfig from_json(const std::string& text);
};

constexpr double kLrDropFactor = 0.1;

struct TrainState {
  std::size_t step = 0;   // optimizer steps taken
  std::size_t epoch = 0;  // current epoch
  std::size_t batch = 0;  // next batch within the epoch
  double best_map = -1.0;
};

struct StepStats {
  double loss = 0.0;
  double loss_class = 0.0;
  double loss_box = 0.0;
  double grad_norm = 0.0;
};

// Raised when the loss or the gradient norm becomes non-finite.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& sample_id, const std::string& what)
      : NumericError(what), sample_id_(sample_id) {}
  const std::string& sample_id() const { return sample_id_; }

 private:
  std::string sample_id_;
};

// Mean of the per-sample matched losses. Matching is recomputed from the
// current head values for every sample.
matching::LossTerms batch_loss(const model::HoiTransformer& model, std::span<const data::Sample> batch,
                               const matching::MatchWeights& weights,
                               std::span<std::mt19937_64> dropout_rngs = {});

class Trainer {
 public:
  // Parameters named "backbone.*" use lr_backbone, the rest lr_transformer.
  Trainer(model::HoiTransformer& model, TrainConfig config);

  // Forward, matching, loss, backward, clipping and one AdamW update.
  // Throws TrainingAborted naming the first sample of the batch whose loss is
  // non-finite.
  StepStats train_step(std::span<const data::Sample> batch,
                       std::span<std::mt19937_64> dropout_rngs = {});

  // Sets both group learning rates for `epoch`.
  void apply_schedule(std::size_t epoch);
  double lr_transformer() const { return optimizer_.group_lr(1); }
  double lr_backbone() const { return optimizer_.group_lr(0); }

  const TrainConfig& config() const { return config_; }
  model::HoiTransformer& model() { return model_; }
  ad::AdamW& optimizer() { return optimizer_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  // Model parameters, optimizer moments, configs and counters.
  ad::ParameterFile checkpoint() const;
  // Restores parameters, moments and counters. Throws ConfigError when the
  // checkpoint's model config differs from the trainer's model.
  void restore(const ad::ParameterFile& file);

 private:
  model::HoiTransformer& model_;
  TrainConfig config_;
  ad::AdamW optimizer_;
  TrainState state_;
};

// One line of the metric history.
struct HistoryRecord {
  enum class Kind { kStep, kEval };
  Kind kind = Kind::kStep;
  std::size_t step = 0;
  std::size_t epoch = 0;
  StepStats stats;  // kStep only
  double lr_transformer = 0.0;
  double lr_backbone = 0.0;
  double map = 0.0;  // kEval only

  std::string to_json() const;
};

struct FitOptions {
  // Where best.ckpt, last.ckpt and history.jsonl go; empty writes nothing.
  std::filesystem::path out_dir;
  // Evaluated without augmentation; the training set when null.
  const data::Dataset* eval_dataset = nullptr;
  std::optional<std::filesystem::path> resume;
  std::size_t eval_threads = 1;
  std::function<void(const HistoryRecord&)> on_record;
};

struct FitResult {
  std::vector<HistoryRecord> history;  // records produced by this call
  double best_map = -1.0;
  double final_map = -1.0;
  std::size_t steps = 0;
  bool reached_target = false;
};

// Default-setting Full mAP of the model on a dataset, scoring every query.
double evaluate_map(const model::HoiTransformer& model, const data::Dataset& dataset,
                    std::size_t threads = 1);

// Shuffle order of `epoch`, a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t size);

// Seeded stream for one (seed, epoch, position, purpose) tuple.
std::mt19937_64 derived_rng(std::uint64_t seed, std::size_t epoch, std::size_t position,
                            std::uint32_t purpose);

FitResult fit(model::HoiTransformer& model, const data::Dataset& dataset, const TrainConfig& config,
              const FitOptions& options = {});

}  // namespace hoit::train
