#include "hoit/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include <CLI11.hpp>

#include "hoit/cli/run_config.hpp"
#include "hoit/data/synth.hpp"
#include "hoit/errors.hpp"
#include "hoit/eval/eval.hpp"
#include "hoit/eval/inference.hpp"
#include "hoit/train/trainer.hpp"

namespace hoit::cli {

namespace fs = std::filesystem;

namespace {

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  const auto probe = dir / ".hoit_write_probe";
  std::ofstream f(probe);
  if (!f) throw ConfigError("output directory " + dir.string() + " is not writable");
  f.close();
  fs::remove(probe, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

void check_model_matches(const model::ModelConfig& m, const data::DatasetManifest& manifest) {
  if (m.num_object_classes != manifest.num_objects() ||
      m.num_interaction_classes != manifest.num_interactions()) {
    throw ConfigError("checkpoint predicts " + std::to_string(m.num_object_classes) + " objects x " +
                      std::to_string(m.num_interaction_classes) + " interactions, manifest has " +
                      std::to_string(manifest.num_objects()) + " x " +
                      std::to_string(manifest.num_interactions()));
  }
}

struct TrainArgs {
  std::string config;
  std::string resume;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config);
  for (const auto& o : a.overrides) apply_override(cfg, o);
  cfg.validate();
  if (cfg.annotations.empty()) throw ConfigError("data.annotations: required");
  if (cfg.manifest.empty()) throw ConfigError("data.manifest: required");
  const auto dataset = data::load_dataset(cfg.annotations, cfg.manifest);
  cfg.model.num_object_classes = dataset.manifest.num_objects();
  cfg.model.num_interaction_classes = dataset.manifest.num_interactions();
  cfg.validate();
  std::optional<data::Dataset> held_out;
  if (!cfg.eval_annotations.empty()) held_out = data::load_dataset(cfg.eval_annotations, cfg.manifest);

  ensure_directory(cfg.output_dir);
  write_text(cfg.output_dir / "resolved_config.ini", dump_run_config(cfg));

  model::HoiTransformer model(cfg.model, cfg.train.seed);
  train::FitOptions opts;
  opts.out_dir = cfg.output_dir;
  opts.eval_dataset = held_out ? &*held_out : nullptr;
  opts.eval_threads = cfg.threads;
  if (!a.resume.empty()) opts.resume = fs::path(a.resume);
  double running = 0.0;
  std::size_t count = 0;
  opts.on_record = [&](const train::HistoryRecord& r) {
    if (r.kind == train::HistoryRecord::Kind::kStep) {
      running += r.stats.loss;
      ++count;
      return;
    }
    out << "epoch " << r.epoch + 1 << " step " << r.step << " loss " << std::fixed << std::setprecision(4)
        << (count ? running / static_cast<double>(count) : 0.0) << " mAP " << r.map << '\n'
        << std::flush;
    running = 0.0;
    count = 0;
  };
  out << "training " << dataset.records.size() << " images, " << model.parameters().size()
      << " parameter tensors, output " << cfg.output_dir.string() << '\n';
  const auto result = train::fit(model, dataset, cfg.train, opts);
  out << "done: " << result.steps << " steps, best mAP " << std::fixed << std::setprecision(4)
      << result.best_map << '\n';
  return kExitOk;
}

struct InferArgs {
  std::string checkpoint, annotations, manifest, out, config;
  std::vector<std::string> images;
  std::optional<double> threshold;
  std::optional<std::size_t> top_k;
  std::string score;
  std::size_t threads = 1;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  eval::InferenceConfig icfg;
  std::size_t threads = a.threads;
  if (!a.config.empty()) {
    const auto rc = load_run_config(a.config);
    icfg = rc.infer;
  }
  if (a.threshold) icfg.threshold = *a.threshold;
  if (a.top_k) icfg.top_k = *a.top_k;
  if (!a.score.empty()) icfg.score = eval::parse_score_mode(a.score);
  icfg.validate();
  if (a.annotations.empty() == a.images.empty()) {
    throw ConfigError("infer: give either --annotations with --manifest or one or more --image");
  }
  const auto model = model::load_model(a.checkpoint);
  std::vector<eval::Detection> dets;
  if (!a.annotations.empty()) {
    if (a.manifest.empty()) throw ConfigError("infer: --annotations requires --manifest");
    const auto dataset = data::load_dataset(a.annotations, a.manifest);
    check_model_matches(model.config(), dataset.manifest);
    dets = eval::detect_dataset(model, dataset, icfg, threads);
  } else {
    for (const auto& path : a.images) {
      const auto found = eval::detect(model, data::read_ppm(path), path, icfg);
      dets.insert(dets.end(), found.begin(), found.end());
    }
  }
  eval::save_detections(a.out, dets);
  out << dets.size() << " detections written to " << a.out << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string detections, annotations, manifest, setting = "default", out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto setting = eval::parse_setting(a.setting);
  const auto manifest = data::load_manifest(a.manifest);
  const auto records = data::load_annotations(a.annotations, manifest);
  const auto dets = eval::load_detections(a.detections);
  const auto report = eval::compute_role_map(dets, records, manifest, setting);
  out << eval::report_text(report, manifest);
  const fs::path report_path = a.out.empty() ? fs::path(a.detections + ".report.json") : fs::path(a.out);
  write_text(report_path, eval::report_json(report, manifest) + "\n");
  out << "report written to " << report_path.string() << '\n';
  return kExitOk;
}

struct VizArgs {
  std::string checkpoint, image, out;
  std::size_t query = 0;
};

int cmd_viz(const VizArgs& a, std::ostream& out) {
  const auto model = model::load_model(a.checkpoint);
  const std::size_t n = model.config().num_queries;
  if (a.query >= n) {
    throw ConfigError("query index " + std::to_string(a.query) + " out of range [0, " + std::to_string(n) + ")");
  }
  const auto image = data::read_ppm(a.image);
  ad::NoGradGuard no_grad;
  const auto fwd = model.forward(data::to_tensor(image));
  const std::size_t h = fwd.feature_height, w = fwd.feature_width;
  const auto row = fwd.cross_attention.values().subspan(a.query * h * w, h * w);
  double total = 0.0;
  for (double v : row) total += v;
  out << "query " << a.query << " attention over " << h << "x" << w << " features, sum "
      << std::setprecision(12) << std::fixed << total << '\n';

  data::Image small(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) small.at(x, y, c) = row[y * w + x];
    }
  }
  const auto big = data::resize_bilinear(small, image.width, image.height);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t p = 0; p < image.width * image.height; ++p) {
    lo = std::min(lo, big.pixels[p * 3]);
    hi = std::max(hi, big.pixels[p * 3]);
  }
  // Interpolation rounding must not turn a flat map into full-range noise.
  const bool flat = hi - lo <= 1e-9 * std::max(1.0, std::abs(hi));
  std::vector<unsigned char> gray(image.width * image.height, 0);
  if (!flat) {
    for (std::size_t p = 0; p < gray.size(); ++p) {
      gray[p] = static_cast<unsigned char>(std::lround((big.pixels[p * 3] - lo) / (hi - lo) * 255.0));
    }
  }
  data::write_pgm(a.out, image.width, image.height, gray);
  out << "heatmap " << image.width << "x" << image.height << " written to " << a.out << '\n';
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  data::SynthSpec spec;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  a.spec.validate();
  auto dataset = data::synth_generate(a.spec, a.seed);
  const fs::path dir(a.out);
  ensure_directory(dir / "images");
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    auto& rec = dataset.records[i];
    std::ostringstream name;
    name << "images/" << std::setw(6) << std::setfill('0') << i << ".ppm";
    data::write_ppm(dir / name.str(), data::render_scene(rec));
    rec.image = name.str();
  }
  data::save_annotations(dir / "annotations.jsonl", dataset.records);
  data::save_manifest(dir / "manifest.json", dataset.manifest);
  std::size_t pairs = 0;
  for (const auto& r : dataset.records) pairs += r.hois.size();
  out << dataset.records.size() << " images, " << pairs << " pairs, "
      << dataset.manifest.rare_categories.size() << " rare categories written to " << dir.string() << '\n';
  return kExitOk;
}

struct CheckArgs {
  std::string annotations, manifest;
  std::size_t max_hois = 3;
};

int cmd_check_synth(const CheckArgs& a, std::ostream& out) {
  const auto manifest = data::load_manifest(a.manifest);
  const auto records = data::load_annotations(a.annotations, manifest);
  std::size_t valid = 0;
  for (const auto& r : records) {
    const auto issues = data::check_record(r, data::SynthRules{}, a.max_hois);
    if (issues.empty()) ++valid;
    for (const auto& i : issues) out << i << '\n';
  }
  out << valid << "/" << records.size() << " records valid\n";
  return valid == records.size() ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transformer-based human-object interaction detection", "hoit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", train_args.config, "INI config file")->required();
  train->add_option("--resume", train_args.resume, "Checkpoint to resume from");
  train->add_option("--set", train_args.overrides, "Override a key: section.key=value");

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "Write detections for a dataset or images");
  infer->add_option("--checkpoint", infer_args.checkpoint, "Model checkpoint")->required();
  infer->add_option("--annotations", infer_args.annotations, "Annotation file listing the images");
  infer->add_option("--manifest", infer_args.manifest, "Dataset manifest");
  infer->add_option("--image", infer_args.images, "PPM image (repeatable)");
  infer->add_option("--out", infer_args.out, "Detections file (JSON lines)")->required();
  infer->add_option("--config", infer_args.config, "Config file providing [infer] defaults");
  infer->add_option("--threshold", infer_args.threshold, "Minimum composite score");
  infer->add_option("--top-k", infer_args.top_k, "Keep at most this many detections per image");
  infer->add_option("--score", infer_args.score, "product | interaction | geometric-mean");
  infer->add_option("--threads", infer_args.threads, "Worker threads (capped by HOIT_THREADS)");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score detections with role mAP");
  eval->add_option("--detections", eval_args.detections, "Detections file")->required();
  eval->add_option("--annotations", eval_args.annotations, "Ground-truth annotations")->required();
  eval->add_option("--manifest", eval_args.manifest, "Dataset manifest")->required();
  eval->add_option("--setting", eval_args.setting, "default | known-object");
  eval->add_option("--out", eval_args.out, "Report JSON (default: <detections>.report.json)");

  VizArgs viz_args;
  auto* viz = app.add_subcommand("viz-attention", "Export a decoder attention heatmap");
  viz->add_option("--checkpoint", viz_args.checkpoint, "Model checkpoint")->required();
  viz->add_option("--image", viz_args.image, "PPM image")->required();
  viz->add_option("--query", viz_args.query, "Query index")->required();
  viz->add_option("--out", viz_args.out, "Output PGM")->required();

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--seed", synth_args.seed, "Random seed");
  synth->add_option("--images", synth_args.spec.num_images, "Number of images");
  synth->add_option("--width", synth_args.spec.width, "Image width");
  synth->add_option("--height", synth_args.spec.height, "Image height");
  synth->add_option("--objects", synth_args.spec.num_objects, "Object classes");
  synth->add_option("--min-hois", synth_args.spec.min_hois, "Minimum pairs per image");
  synth->add_option("--max-hois", synth_args.spec.max_hois, "Maximum pairs per image");
  synth->add_option("--rare-threshold", synth_args.spec.rare_threshold, "Rare below this many pairs");

  CheckArgs check_args;
  auto* check = app.add_subcommand("check-synth", "Verify synthetic labels against the scene rules");
  check->add_option("--annotations", check_args.annotations, "Annotation file")->required();
  check->add_option("--manifest", check_args.manifest, "Dataset manifest")->required();
  check->add_option("--max-hois", check_args.max_hois, "Maximum pairs per image");

  std::vector<std::string> argv_store{"hoit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "hoit: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_args, out);
    if (infer->parsed()) return cmd_infer(infer_args, out);
    if (eval->parsed()) return cmd_eval(eval_args, out);
    if (viz->parsed()) return cmd_viz(viz_args, out);
    if (synth->parsed()) return cmd_synth(synth_args, out);
    if (check->parsed()) return cmd_check_synth(check_args, out);
  } catch (const train::TrainingAborted& e) {
    err << "hoit: training aborted on sample " << e.sample_id() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const ConfigError& e) {
    err << "hoit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    err << "hoit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "hoit: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hoit::cli
