#include "hoit/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hoit/ad/ops.hpp"
#include "hoit/eval/eval.hpp"
#include "hoit/eval/inference.hpp"

namespace hoit::train {

using nlohmann::ordered_json;

namespace {

void fail(const std::string& key, const std::string& why) {
  throw ConfigError("train." + key + ": " + why);
}

ordered_json augment_json(const data::AugmentConfig& a) {
  return {{"color", a.color},
          {"flip", a.flip},
          {"scale", a.scale},
          {"crop", a.crop},
          {"color_prob", a.color_prob},
          {"jitter_lo", a.jitter_lo},
          {"jitter_hi", a.jitter_hi},
          {"flip_prob", a.flip_prob},
          {"scale_min", a.scale_min},
          {"scale_max", a.scale_max},
          {"max_size", a.max_size},
          {"crop_prob", a.crop_prob},
          {"crop_min_fraction", a.crop_min_fraction},
          {"crop_retries", a.crop_retries}};
}

ordered_json weights_json(const matching::MatchWeights& w) {
  return {{"alpha_h", w.alpha_h}, {"alpha_o", w.alpha_o}, {"alpha_r", w.alpha_r},
          {"beta1", w.beta1},     {"beta2", w.beta2},     {"giou_w", w.giou_w},
          {"l1_w", w.l1_w},       {"background_weight", w.background_weight}};
}

ordered_json train_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr_drop", c.lr_drop},
          {"lr_transformer", c.lr_transformer},
          {"lr_backbone", c.lr_backbone},
          {"weight_decay", c.weight_decay},
          {"clip_norm", c.clip_norm},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"eval_interval", c.eval_interval},
          {"target_map", c.target_map},
          {"augment", c.augment},
          {"augmentation", augment_json(c.augmentation)},
          {"weights", weights_json(c.weights)}};
}

template <typename T>
void read(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) fail("epochs", "must be positive");
  if (lr_drop > epochs) fail("lr_drop", "must not exceed epochs");
  auto rate = [](const char* key, double v) {
    if (!std::isfinite(v) || v < 0.0) fail(key, "must be finite and non-negative");
  };
  rate("lr_transformer", lr_transformer);
  rate("lr_backbone", lr_backbone);
  rate("weight_decay", weight_decay);
  rate("clip_norm", clip_norm);
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (!(target_map >= 0.0 && target_map <= 1.0)) fail("target_map", "must lie in [0, 1]");
  augmentation.validate();
  weights.validate();
}

std::string TrainConfig::to_json() const { return train_json(*this).dump(); }

TrainConfig TrainConfig::from_json(const std::string& text) {
  auto j = ordered_json::parse(text);
  if (j.contains("train")) j = j.at("train");
  TrainConfig c;
  read(j, "epochs", c.epochs);
  read(j, "lr_drop", c.lr_drop);
  read(j, "lr_transformer", c.lr_transformer);
  read(j, "lr_backbone", c.lr_backbone);
  read(j, "weight_decay", c.weight_decay);
  read(j, "clip_norm", c.clip_norm);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "eval_interval", c.eval_interval);
  read(j, "target_map", c.target_map);
  read(j, "augment", c.augment);
  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    auto& o = c.augmentation;
    read(a, "color", o.color);
    read(a, "flip", o.flip);
    read(a, "scale", o.scale);
    read(a, "crop", o.crop);
    read(a, "color_prob", o.color_prob);
    read(a, "jitter_lo", o.jitter_lo);
    read(a, "jitter_hi", o.jitter_hi);
    read(a, "flip_prob", o.flip_prob);
    read(a, "scale_min", o.scale_min);
    read(a, "scale_max", o.scale_max);
    read(a, "max_size", o.max_size);
    read(a, "crop_prob", o.crop_prob);
    read(a, "crop_min_fraction", o.crop_min_fraction);
    read(a, "crop_retries", o.crop_retries);
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    auto& o = c.weights;
    read(w, "alpha_h", o.alpha_h);
    read(w, "alpha_o", o.alpha_o);
    read(w, "alpha_r", o.alpha_r);
    read(w, "beta1", o.beta1);
    read(w, "beta2", o.beta2);
    read(w, "giou_w", o.giou_w);
    read(w, "l1_w", o.l1_w);
    read(w, "background_weight", o.background_weight);
  }
  return c;
}

matching::LossTerms batch_loss(const model::HoiTransformer& model, std::span<const data::Sample> batch,
                               const matching::MatchWeights& weights,
                               std::span<std::mt19937_64> dropout_rngs) {
  if (batch.empty()) throw ContractError("empty batch");
  matching::LossTerms sum;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    model::ForwardOptions opts;
    if (i < dropout_rngs.size()) opts.dropout_rng = &dropout_rngs[i];
    matching::LossTerms terms;
    try {
      const auto out = model.forward(data::to_tensor(batch[i].image), opts);
      const auto sigma = matching::match(batch[i].hois, out.heads, weights);
      terms = matching::hoi_loss_terms(batch[i].hois, out.heads, sigma, weights);
    } catch (const NumericError& e) {
      throw TrainingAborted(batch[i].id, "non-finite values on sample " + batch[i].id + ": " + e.what());
    }
    if (!std::isfinite(terms.total.item())) {
      throw TrainingAborted(batch[i].id, "non-finite loss on sample " + batch[i].id);
    }
    if (!terms.box.defined()) terms.box = ad::Tensor::scalar(0.0);
    auto acc = [&](ad::Tensor& into, const ad::Tensor& t) {
      const ad::Tensor scaled = ad::scale(t, inv_b);
      into = into.defined() ? into + scaled : scaled;
    };
    acc(sum.total, terms.total);
    acc(sum.classification, terms.classification);
    acc(sum.box, terms.box);
  }
  return sum;
}

Trainer::Trainer(model::HoiTransformer& model, TrainConfig config)
    : model_(model), config_(std::move(config)), optimizer_({config_.weight_decay}) {
  config_.validate();
  optimizer_.add_group("backbone", model_.backbone_parameters(), config_.lr_backbone);
  optimizer_.add_group("transformer", model_.transformer_parameters(), config_.lr_transformer);
}

void Trainer::apply_schedule(std::size_t epoch) {
  const double factor = epoch >= config_.lr_drop ? kLrDropFactor : 1.0;
  optimizer_.set_group_lr(0, config_.lr_backbone * factor);
  optimizer_.set_group_lr(1, config_.lr_transformer * factor);
}

StepStats Trainer::train_step(std::span<const data::Sample> batch, std::span<std::mt19937_64> dropout_rngs) {
  optimizer_.zero_grad();
  const auto terms = batch_loss(model_, batch, config_.weights, dropout_rngs);
  StepStats stats;
  stats.loss = terms.total.item();
  stats.loss_class = terms.classification.item();
  stats.loss_box = terms.box.item();
  terms.total.backward();
  const auto& params = model_.parameters();
  stats.grad_norm = config_.clip_norm > 0.0
                        ? ad::clip_grad_norm(params, config_.clip_norm)
                        : ad::clip_grad_norm(params, std::numeric_limits<double>::infinity());
  if (!std::isfinite(stats.grad_norm)) {
    throw TrainingAborted(batch.front().id, "non-finite gradient norm at step " +
                                                std::to_string(state_.step) + " (batch starting with " +
                                                batch.front().id + ")");
  }
  optimizer_.step();
  ++state_.step;
  return stats;
}

ad::ParameterFile Trainer::checkpoint() const {
  ad::ParameterFile file = model_.to_parameter_file();
  ordered_json meta;
  meta["model"] = ordered_json::parse(model_.config().to_json());
  meta["train"] = train_json(config_);
  meta["state"] = {{"step", state_.step},
                   {"epoch", state_.epoch},
                   {"batch", state_.batch},
                   {"best_map", state_.best_map},
                   {"optimizer_steps", optimizer_.step_count()}};
  file.metadata = meta.dump();
  auto& opt = const_cast<ad::AdamW&>(optimizer_);
  for (const auto& name : opt.parameter_names()) {
    const auto& m = opt.moments(name);
    if (m.first.empty()) continue;
    const auto shape = model_.parameter(name).shape();
    file.put("optim.first/" + name, shape, m.first);
    file.put("optim.second/" + name, shape, m.second);
  }
  return file;
}

void Trainer::restore(const ad::ParameterFile& file) {
  const auto saved = model::ModelConfig::from_json(file.metadata);
  if (!(saved == model_.config())) {
    throw ConfigError("checkpoint model config does not match the configured model");
  }
  model_.load_parameters(file);
  const auto meta = ordered_json::parse(file.metadata);
  if (!meta.contains("state")) throw ConfigError("checkpoint carries no training state");
  const auto& s = meta.at("state");
  state_.step = s.at("step").get<std::size_t>();
  state_.epoch = s.at("epoch").get<std::size_t>();
  state_.batch = s.at("batch").get<std::size_t>();
  state_.best_map = s.at("best_map").get<double>();
  optimizer_.set_step_count(s.at("optimizer_steps").get<std::size_t>());
  for (const auto& name : optimizer_.parameter_names()) {
    auto& m = optimizer_.moments(name);
    if (file.contains("optim.first/" + name)) {
      m.first = file.at("optim.first/" + name).values;
      m.second = file.at("optim.second/" + name).values;
    } else {
      m.first.clear();
      m.second.clear();
    }
  }
}

std::string HistoryRecord::to_json() const {
  ordered_json j;
  j["kind"] = kind == Kind::kStep ? "step" : "eval";
  j["step"] = step;
  j["epoch"] = epoch;
  if (kind == Kind::kStep) {
    j["loss"] = stats.loss;
    j["loss_class"] = stats.loss_class;
    j["loss_box"] = stats.loss_box;
    j["grad_norm"] = stats.grad_norm;
    j["lr_transformer"] = lr_transformer;
    j["lr_backbone"] = lr_backbone;
  } else {
    j["map"] = map;
  }
  return j.dump();
}

double evaluate_map(const model::HoiTransformer& model, const data::Dataset& dataset, std::size_t threads) {
  eval::InferenceConfig cfg;
  cfg.threshold = 0.0;
  const auto dets = eval::detect_dataset(model, dataset, cfg, threads);
  return eval::compute_role_map(dets, dataset.records, dataset.manifest, eval::Setting::kDefault).full;
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::size_t epoch, std::size_t position,
                            std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(position), purpose};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t size) {
  std::vector<std::size_t> order(size);
  for (std::size_t i = 0; i < size; ++i) order[i] = i;
  auto rng = derived_rng(seed, epoch, 0, 0);
  // Fisher-Yates with an explicit draw, so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = size; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

namespace {

constexpr std::uint32_t kAugmentStream = 1;
constexpr std::uint32_t kDropoutStream = 2;

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

FitResult fit(model::HoiTransformer& model, const data::Dataset& dataset, const TrainConfig& config,
              const FitOptions& options) {
  if (dataset.records.empty()) throw InputError("training set is empty");
  Trainer trainer(model, config);
  if (options.resume) trainer.restore(ad::load_parameter_file(*options.resume));

  std::vector<data::Sample> base;
  base.reserve(dataset.records.size());
  for (std::size_t i = 0; i < dataset.records.size(); ++i) base.push_back(data::load_sample(dataset, i));
  const data::Dataset& eval_set = options.eval_dataset ? *options.eval_dataset : dataset;

  const bool write = !options.out_dir.empty();
  std::ofstream history;
  if (write) {
    std::filesystem::create_directories(options.out_dir);
    const auto path = options.out_dir / "history.jsonl";
    // On resume keep the records up to the restored step.
    std::vector<std::string> kept;
    if (options.resume && std::filesystem::exists(path)) {
      for (auto& line : read_lines(path)) {
        if (ordered_json::parse(line).at("step").get<std::size_t>() <= trainer.state().step) {
          kept.push_back(std::move(line));
        }
      }
    }
    history.open(path, std::ios::trunc);
    for (const auto& line : kept) history << line << '\n';
  }

  FitResult result;
  auto& state = trainer.state();
  result.best_map = state.best_map;
  auto emit = [&](const HistoryRecord& r) {
    result.history.push_back(r);
    if (write) history << r.to_json() << '\n' << std::flush;
    if (options.on_record) options.on_record(r);
  };
  // Checkpoints written at the end of an epoch resume at the start of the next.
  auto save = [&](const char* name) {
    if (!write) return;
    const TrainState current = state;
    state.epoch += 1;
    state.batch = 0;
    ad::save_parameter_file(options.out_dir / name, trainer.checkpoint());
    state = current;
  };

  const std::size_t n = base.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  for (; state.epoch < config.epochs; ++state.epoch, state.batch = 0) {
    trainer.apply_schedule(state.epoch);
    const auto order = epoch_order(config.seed, state.epoch, n);
    for (; state.batch < batches; ++state.batch) {
      std::vector<data::Sample> batch;
      std::vector<std::mt19937_64> dropout_rngs;
      for (std::size_t k = state.batch * config.batch_size; k < std::min(n, (state.batch + 1) * config.batch_size); ++k) {
        auto rng = derived_rng(config.seed, state.epoch, k, kAugmentStream);
        batch.push_back(config.augment ? data::augment(base[order[k]], rng, config.augmentation) : base[order[k]]);
        dropout_rngs.push_back(derived_rng(config.seed, state.epoch, k, kDropoutStream));
      }
      HistoryRecord r;
      r.epoch = state.epoch;
      r.lr_transformer = trainer.lr_transformer();
      r.lr_backbone = trainer.lr_backbone();
      r.stats = trainer.train_step(batch, dropout_rngs);
      r.step = state.step;
      ++result.steps;
      emit(r);
    }
    const bool last_epoch = state.epoch + 1 == config.epochs;
    const bool due = config.eval_interval > 0 && (state.epoch + 1) % config.eval_interval == 0;
    bool stop = false;
    if (due || last_epoch) {
      HistoryRecord r;
      r.kind = HistoryRecord::Kind::kEval;
      r.step = state.step;
      r.epoch = state.epoch;
      r.map = evaluate_map(model, eval_set, options.eval_threads);
      result.final_map = r.map;
      emit(r);
      if (r.map > state.best_map) {
        state.best_map = r.map;
        result.best_map = r.map;
        save("best.ckpt");
      }
      if (config.target_map > 0.0 && r.map >= config.target_map) {
        result.reached_target = true;
        stop = true;
      }
    }
    save("last.ckpt");
    if (stop) {
      ++state.epoch;
      break;
    }
  }
  return result;
}

}  // namespace hoit::train
