#include "hoit/model/config.hpp"

#include <algorithm>

#include <json.hpp>

#include "hoit/errors.hpp"

namespace hoit::model {

using nlohmann::json;

ModelConfig ModelConfig::desk(std::size_t num_objects, std::size_t num_interactions) {
  ModelConfig c;
  c.d_model = 64;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.heads = 4;
  c.ffn_dim = 128;
  c.num_queries = 16;
  c.num_object_classes = num_objects;
  c.num_interaction_classes = num_interactions;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("model." + key + ": " + why);
  };
  if (d_model == 0) fail("d_model", "must be positive");
  if (heads == 0) fail("heads", "must be positive");
  if (d_model % heads != 0) fail("heads", "d_model must be divisible by heads");
  if (d_model % 4 != 0) fail("d_model", "must be divisible by 4 for the 2D positional encoding");
  if (ffn_dim == 0) fail("ffn_dim", "must be positive");
  if (num_queries == 0) fail("num_queries", "must be positive");
  if (num_object_classes == 0) fail("num_object_classes", "must be positive");
  if (num_interaction_classes == 0) fail("num_interaction_classes", "must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must lie in [0, 1)");
  if (backbone.channels.empty()) fail("backbone_channels", "needs at least one block");
  for (std::size_t c : backbone.channels) {
    if (c == 0) fail("backbone_channels", "channel counts must be positive");
  }
  if (backbone.channels.size() >= 31 ||
      backbone.downsample != (std::size_t{1} << backbone.channels.size())) {
    fail("downsample", "must equal 2^(number of backbone blocks) = " +
                           std::to_string(std::size_t{1} << std::min<std::size_t>(
                                              backbone.channels.size(), 30)));
  }
}

std::string ModelConfig::to_json() const {
  json j = {
      {"d_model", d_model},
      {"encoder_layers", encoder_layers},
      {"decoder_layers", decoder_layers},
      {"heads", heads},
      {"ffn_dim", ffn_dim},
      {"num_queries", num_queries},
      {"num_object_classes", num_object_classes},
      {"num_interaction_classes", num_interaction_classes},
      {"backbone_channels", backbone.channels},
      {"downsample", backbone.downsample},
      {"dropout", dropout},
  };
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json root = json::parse(text);
    // Training checkpoints nest the model config under "model".
    const json& j = root.contains("model") ? root.at("model") : root;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.num_queries = j.at("num_queries").get<std::size_t>();
    c.num_object_classes = j.at("num_object_classes").get<std::size_t>();
    c.num_interaction_classes = j.at("num_interaction_classes").get<std::size_t>();
    c.backbone.channels = j.at("backbone_channels").get<std::vector<std::size_t>>();
    c.backbone.downsample = j.at("downsample").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace hoit::model
