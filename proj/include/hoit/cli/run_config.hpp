#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "hoit/eval/inference.hpp"
#include "hoit/model/config.hpp"
#include "hoit/train/trainer.hpp"

namespace hoit::cli {

// Everything a run needs, read from one INI file with the sections
// [model] [train] [match] [augment] [data] [infer] [output].
struct RunConfig {
  // Class counts are taken from the dataset manifest at train time.
  model::ModelConfig model = model::ModelConfig::desk(1, 1);
  train::TrainConfig train;
  std::filesystem::path annotations;
  std::filesystem::path manifest;
  std::filesystem::path eval_annotations;  // optional held-out set
  eval::InferenceConfig infer;
  std::filesystem::path output_dir = "runs/default";
  std::size_t threads = 1;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Parses INI text. Unknown sections or keys and malformed values raise
// ConfigError naming "section.key". Relative paths resolve against base_dir.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies one "section.key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);

// Every key with its effective value, in INI form.
std::string dump_run_config(const RunConfig& config);

}  // namespace hoit::cli
