#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hoit::model {

// Strided convolutional stem. Each entry of `channels` is one 3x3 stride-2
// conv + ReLU block, so the total stride is 2^channels.size() and must equal
// `downsample`.
struct BackboneConfig {
  std::vector<std::size_t> channels{16, 32, 64, 64};
  std::size_t downsample = 16;

  bool operator==(const BackboneConfig&) const = default;
};

struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t encoder_layers = 6;
  std::size_t decoder_layers = 6;
  std::size_t heads = 8;
  std::size_t ffn_dim = 2048;
  std::size_t num_queries = 100;
  std::size_t num_object_classes = 80;
  std::size_t num_interaction_classes = 117;
  BackboneConfig backbone;
  double dropout = 0.0;

  // d=64, 2+2 layers, N=16.
  static ModelConfig desk(std::size_t num_objects, std::size_t num_interactions);

  // Throws ConfigError naming the offending field.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace hoit::model
