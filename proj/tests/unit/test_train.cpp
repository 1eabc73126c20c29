#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hoit/ad/ops.hpp"
#include "hoit/data/synth.hpp"
#include "hoit/eval/inference.hpp"
#include "hoit/train/trainer.hpp"

using namespace hoit;

namespace {

data::Dataset tiny_dataset(std::size_t images, std::uint64_t seed = 0) {
  data::SynthSpec spec;
  spec.num_images = images;
  return data::synth_generate(spec, seed);
}

model::ModelConfig tiny_config(const data::Dataset& ds) {
  auto c = model::ModelConfig::desk(ds.manifest.num_objects(), ds.manifest.num_interactions());
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.d_model = 32;
  c.ffn_dim = 64;
  c.num_queries = 8;
  return c;
}

std::vector<data::Sample> samples(const data::Dataset& ds) {
  std::vector<data::Sample> out;
  for (std::size_t i = 0; i < ds.records.size(); ++i) out.push_back(data::load_sample(ds, i));
  return out;
}

std::vector<std::vector<double>> snapshot(const model::HoiTransformer& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("hoit_train_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

train::TrainConfig quick_config() {
  train::TrainConfig c;
  c.epochs = 3;
  c.lr_drop = 3;
  c.lr_transformer = 1e-3;
  c.lr_backbone = 1e-4;
  c.batch_size = 2;
  c.eval_interval = 0;
  return c;
}

}  // namespace

TEST_CASE("zero learning rates leave parameters bit-identical") {
  const auto ds = tiny_dataset(2);
  model::HoiTransformer m(tiny_config(ds), 1);
  auto cfg = quick_config();
  cfg.lr_transformer = 0.0;
  cfg.lr_backbone = 0.0;
  train::Trainer t(m, cfg);
  const auto before = snapshot(m);
  const auto batch = samples(ds);
  const auto stats = t.train_step(batch);
  CHECK(std::isfinite(stats.loss));
  CHECK(snapshot(m) == before);
}

TEST_CASE("batch loss is the mean of independently computed per-sample losses") {
  const auto ds = tiny_dataset(3);
  model::HoiTransformer m(tiny_config(ds), 2);
  const auto batch = samples(ds);
  const matching::MatchWeights w;
  double sum = 0.0;
  for (const auto& s : batch) {
    const auto out = m.forward(data::to_tensor(s.image));
    const auto preds = out.heads.predictions();
    const auto cost = matching::build_cost_matrix(s.hois, preds, w);
    const auto sigma = matching::hungarian(cost);
    sum += matching::hoi_loss(s.hois, out.heads, sigma, w).item();
  }
  train::Trainer t(m, quick_config());
  const auto stats = t.train_step(batch);
  CHECK(stats.loss == doctest::Approx(sum / 3.0).epsilon(1e-12));
  CHECK(stats.loss == doctest::Approx(stats.loss_class + stats.loss_box).epsilon(1e-12));
}

TEST_CASE("matching is recomputed from the current parameters at every step") {
  const auto ds = tiny_dataset(1);
  model::HoiTransformer m(tiny_config(ds), 3);
  const auto batch = samples(ds);
  train::Trainer t(m, quick_config());
  for (int step = 0; step < 5; ++step) {
    // Loss of the step equals a fresh matching against the pre-step parameters.
    const auto out = m.forward(data::to_tensor(batch[0].image));
    const auto sigma = matching::match(batch[0].hois, out.heads, t.config().weights);
    const double expected = matching::hoi_loss(batch[0].hois, out.heads, sigma, t.config().weights).item();
    CHECK(t.train_step(batch).loss == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("fifty steps on one sample halve the loss") {
  const auto ds = tiny_dataset(1, 4);
  model::HoiTransformer m(model::ModelConfig::desk(ds.manifest.num_objects(), ds.manifest.num_interactions()), 0);
  train::Trainer t(m, quick_config());
  const auto batch = samples(ds);
  const double first = t.train_step(batch).loss;
  double last = first;
  for (int i = 1; i < 50; ++i) last = t.train_step(batch).loss;
  MESSAGE("loss " << first << " -> " << last);
  CHECK(last <= 0.5 * first);
}

TEST_CASE("backbone parameters step with lr_backbone") {
  const auto ds = tiny_dataset(1);
  model::HoiTransformer m(tiny_config(ds), 5);
  auto cfg = quick_config();
  cfg.lr_backbone = 1e-3;
  cfg.lr_transformer = 1e-2;
  cfg.weight_decay = 0.0;
  train::Trainer t(m, cfg);
  const auto before = snapshot(m);
  t.optimizer().zero_grad();
  for (auto p : m.parameters()) {
    auto g = p.tensor.mutable_grad();
    std::fill(g.begin(), g.end(), 1.0);
  }
  t.optimizer().step();
  const auto after = snapshot(m);
  std::size_t backbone = 0, transformer = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool is_backbone = m.parameters()[i].name.rfind("backbone.", 0) == 0;
    // First bias-corrected step with g = 1: delta = -lr / (1 + eps).
    const double expected = -(is_backbone ? 1e-3 : 1e-2) / (1.0 + 1e-8);
    for (std::size_t k = 0; k < before[i].size(); ++k) {
      REQUIRE(after[i][k] - before[i][k] == doctest::Approx(expected).epsilon(1e-9));
    }
    (is_backbone ? backbone : transformer) += 1;
  }
  CHECK(backbone == 2 * model::BackboneConfig{}.channels.size());
  CHECK(transformer > backbone);
}

TEST_CASE("non-finite loss aborts naming the sample") {
  const auto ds = tiny_dataset(2);
  model::HoiTransformer m(tiny_config(ds), 6);
  train::Trainer t(m, quick_config());
  auto batch = samples(ds);
  batch[1].image.pixels[5] = std::nan("");
  batch[1].id = "poisoned";
  try {
    t.train_step(batch);
    FAIL("expected TrainingAborted");
  } catch (const train::TrainingAborted& e) {
    CHECK(e.sample_id() == "poisoned");
    CHECK(std::string(e.what()).find("poisoned") != std::string::npos);
  }
}

TEST_CASE("config validation names the key") {
  auto expect = [](train::TrainConfig c, const std::string& key) {
    try {
      c.validate();
      FAIL("expected ConfigError for " << key);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  train::TrainConfig c;
  c.lr_transformer = -1e-4;
  expect(c, "train.lr_transformer");
  c = {};
  c.lr_backbone = NAN;
  expect(c, "train.lr_backbone");
  c = {};
  c.lr_drop = c.epochs + 1;
  expect(c, "train.lr_drop");
  c = {};
  c.batch_size = 0;
  expect(c, "train.batch_size");
  c = {};
  c.weights.alpha_r = -1;
  expect(c, "alpha_r");
  CHECK_NOTHROW(train::TrainConfig{}.validate());
}

TEST_CASE("train config JSON round trip") {
  train::TrainConfig c;
  c.epochs = 17;
  c.lr_drop = 9;
  c.lr_transformer = 3e-4;
  c.seed = 123456789012345ull;
  c.augmentation.crop = false;
  c.augmentation.scale_max = 100;
  c.weights.alpha_r = 3.5;
  const auto back = train::TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(train::TrainConfig::from_json("{\"train\":" + c.to_json() + "}").to_json() == c.to_json());
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = train::epoch_order(7, 0, 20);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 20; ++i) CHECK(sorted[i] == i);
  CHECK(train::epoch_order(7, 0, 20) == a);
  CHECK(train::epoch_order(7, 1, 20) != a);
  CHECK(train::epoch_order(8, 0, 20) != a);
}

TEST_CASE("exactly one learning-rate drop at the configured epoch") {
  const auto ds = tiny_dataset(4);
  model::HoiTransformer m(tiny_config(ds), 7);
  auto cfg = quick_config();
  cfg.epochs = 5;
  cfg.lr_drop = 3;
  cfg.augment = false;
  const auto res = train::fit(m, ds, cfg);
  std::size_t drops = 0;
  double prev = -1.0;
  for (const auto& r : res.history) {
    if (r.kind != train::HistoryRecord::Kind::kStep) continue;
    const double factor = r.epoch >= 3 ? 0.1 : 1.0;
    CHECK(r.lr_transformer == doctest::Approx(1e-3 * factor));
    CHECK(r.lr_backbone == doctest::Approx(1e-4 * factor));
    if (prev > 0 && r.lr_transformer != prev) {
      ++drops;
      CHECK(r.lr_transformer == doctest::Approx(prev * 0.1));
      CHECK(r.epoch == 3);
    }
    prev = r.lr_transformer;
  }
  CHECK(drops == 1);
  CHECK(res.steps == 10);
}

TEST_CASE("identical seeds reproduce histories and checkpoint bytes") {
  const auto ds = tiny_dataset(4);
  auto cfg = quick_config();
  cfg.eval_interval = 1;
  const auto d1 = temp_dir("repro1"), d2 = temp_dir("repro2");
  for (const auto& dir : {d1, d2}) {
    model::HoiTransformer m(tiny_config(ds), cfg.seed);
    train::FitOptions o;
    o.out_dir = dir;
    train::fit(m, ds, cfg, o);
  }
  CHECK(slurp(d1 / "history.jsonl") == slurp(d2 / "history.jsonl"));
  CHECK(slurp(d1 / "last.ckpt") == slurp(d2 / "last.ckpt"));
  CHECK(slurp(d1 / "best.ckpt") == slurp(d2 / "best.ckpt"));
  CHECK_FALSE(slurp(d1 / "last.ckpt").empty());

  // A different seed changes the augmentation stream and thus the history.
  const auto d3 = temp_dir("repro3");
  cfg.seed = 1;
  model::HoiTransformer m(tiny_config(ds), 0);
  train::FitOptions o;
  o.out_dir = d3;
  train::fit(m, ds, cfg, o);
  CHECK(slurp(d1 / "history.jsonl") != slurp(d3 / "history.jsonl"));
  for (const auto& d : {d1, d2, d3}) std::filesystem::remove_all(d);
}

TEST_CASE("checkpoint round trip then one step matches the uninterrupted step") {
  const auto ds = tiny_dataset(2);
  const auto batch = samples(ds);
  model::HoiTransformer a(tiny_config(ds), 8);
  train::Trainer ta(a, quick_config());
  ta.train_step(batch);
  ta.train_step(batch);
  const auto bytes = ad::serialize(ta.checkpoint());

  model::HoiTransformer b(tiny_config(ds), 99);
  train::Trainer tb(b, quick_config());
  tb.restore(ad::deserialize(bytes));
  CHECK(snapshot(a) == snapshot(b));
  CHECK(tb.state().step == 2);
  CHECK(tb.optimizer().step_count() == ta.optimizer().step_count());

  const double la = ta.train_step(batch).loss;
  const double lb = tb.train_step(batch).loss;
  CHECK(la == lb);
  CHECK(snapshot(a) == snapshot(b));
  CHECK(ad::serialize(ta.checkpoint()) == ad::serialize(tb.checkpoint()));

  // A mismatched model config is refused.
  auto other = tiny_config(ds);
  other.num_queries = 9;
  model::HoiTransformer c(other, 0);
  train::Trainer tc(c, quick_config());
  CHECK_THROWS_AS(tc.restore(ad::deserialize(bytes)), ConfigError);
}

TEST_CASE("resumed fit reproduces the uninterrupted run") {
  const auto ds = tiny_dataset(3);
  auto full_cfg = quick_config();
  full_cfg.epochs = 4;
  full_cfg.lr_drop = 3;
  full_cfg.eval_interval = 2;
  const auto full_dir = temp_dir("full"), part_dir = temp_dir("part");
  {
    model::HoiTransformer m(tiny_config(ds), 0);
    train::FitOptions o;
    o.out_dir = full_dir;
    train::fit(m, ds, full_cfg, o);
  }
  {
    auto part_cfg = full_cfg;
    part_cfg.epochs = 2;
    part_cfg.lr_drop = 2;
    model::HoiTransformer m(tiny_config(ds), 0);
    train::FitOptions o;
    o.out_dir = part_dir;
    train::fit(m, ds, part_cfg, o);
  }
  {
    model::HoiTransformer m(tiny_config(ds), 12345);
    train::FitOptions o;
    o.out_dir = part_dir;
    o.resume = part_dir / "last.ckpt";
    const auto res = train::fit(m, ds, full_cfg, o);
    CHECK(res.history.front().step == 5);
  }
  CHECK(slurp(full_dir / "history.jsonl") == slurp(part_dir / "history.jsonl"));
  CHECK(slurp(full_dir / "last.ckpt") == slurp(part_dir / "last.ckpt"));
  std::filesystem::remove_all(full_dir);
  std::filesystem::remove_all(part_dir);
}

TEST_CASE("inference threshold and fixed-size output") {
  const auto ds = tiny_dataset(2);
  model::HoiTransformer m(tiny_config(ds), 9);
  const auto s = data::load_sample(ds, 0);
  eval::InferenceConfig cfg;
  cfg.threshold = 1.1;
  CHECK(eval::detect(m, s.image, s.id, cfg).empty());
  cfg.threshold = 0.0;
  const auto all = eval::detect(m, s.image, s.id, cfg);
  CHECK(all.size() == 8);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].score >= all[i].score);
  cfg.top_k = 3;
  CHECK(eval::detect(m, s.image, s.id, cfg).size() == 3);

  // Scores equal the product of the softmax confidences.
  const auto out = m.forward(data::to_tensor(s.image));
  const auto preds = out.heads.predictions();
  std::vector<double> expected;
  for (const auto& p : preds) {
    auto prob = [](const std::vector<double>& l, std::size_t k) {
      double z = 0;
      for (double v : l) z += std::exp(v);
      return std::exp(l[k]) / z;
    };
    double po = 0, pr = 0;
    for (std::size_t k = 0; k + 1 < p.object_logits.size(); ++k) po = std::max(po, prob(p.object_logits, k));
    for (std::size_t k = 0; k + 1 < p.interaction_logits.size(); ++k) pr = std::max(pr, prob(p.interaction_logits, k));
    expected.push_back(prob(p.human_logits, 0) * po * pr);
  }
  std::sort(expected.rbegin(), expected.rend());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i].score == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("dataset inference is independent of the thread count") {
  const auto ds = tiny_dataset(5);
  model::HoiTransformer m(tiny_config(ds), 10);
  eval::InferenceConfig cfg;
  cfg.threshold = 0.0;
  const auto one = eval::detect_dataset(m, ds, cfg, 1);
  const auto three = eval::detect_dataset(m, ds, cfg, 3);
  CHECK(one == three);
  CHECK(one.size() == 5 * 8);
}

TEST_CASE("HOIT_THREADS caps the worker count") {
  ::setenv("HOIT_THREADS", "2", 1);
  CHECK(eval::worker_count(8) == 2);
  CHECK(eval::worker_count(1) == 1);
  ::setenv("HOIT_THREADS", "junk", 1);
  CHECK(eval::worker_count(8) == 8);
  ::unsetenv("HOIT_THREADS");
  CHECK(eval::worker_count(0) == 1);
}
