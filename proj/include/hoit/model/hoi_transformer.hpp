#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hoit/ad/checkpoint.hpp"
#include "hoit/ad/optim.hpp"
#include "hoit/ad/tensor.hpp"
#include "hoit/model/config.hpp"
#include "hoit/model/prediction.hpp"

namespace hoit::model {

struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  ad::Tensor sequence;  // [height*width x d]
};

struct DecoderOutput {
  ad::Tensor embeddings;       // [N x d]
  ad::Tensor cross_attention;  // [N x H*W], last layer, head-averaged; empty with 0 layers
};

struct ForwardOutput {
  HeadOutputs heads;
  ad::Tensor cross_attention;
  std::size_t feature_height = 0;
  std::size_t feature_width = 0;
};

struct ForwardOptions {
  // Enables dropout with the configured rate when non-null.
  std::mt19937_64* dropout_rng = nullptr;
};

class HoiTransformer {
 public:
  static constexpr const char* kBackbonePrefix = "backbone.";

  // Fresh parameters: Xavier-uniform weights, zero biases, unit LayerNorm
  // gains, query embeddings ~ N(0, 0.02^2).
  HoiTransformer(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // All parameters in a fixed order; names are stable across runs.
  const std::vector<ad::NamedTensor>& parameters() const { return params_; }
  std::vector<ad::NamedTensor> backbone_parameters() const;
  std::vector<ad::NamedTensor> transformer_parameters() const;
  ad::Tensor parameter(const std::string& name) const;

  // image is [H0 x W0 x 3]. Throws InputError if either side is smaller
  // than the downsample factor.
  FeatureMap backbone_forward(const ad::Tensor& image) const;
  ad::Tensor encoder_forward(const ad::Tensor& features, const ad::Tensor& pos,
                             const ForwardOptions& opts = {}) const;
  DecoderOutput decoder_forward(const ad::Tensor& memory, const ad::Tensor& pos,
                                const ad::Tensor& queries,
                                const ForwardOptions& opts = {}) const;
  HeadOutputs heads_forward(const ad::Tensor& embeddings) const;

  ForwardOutput forward(const ad::Tensor& image, const ForwardOptions& opts = {}) const;

  // Parameters plus the config (as JSON metadata).
  ad::ParameterFile to_parameter_file() const;
  // Throws ConfigError if a parameter is missing or has the wrong shape.
  void load_parameters(const ad::ParameterFile& file);
  static HoiTransformer from_parameter_file(const ad::ParameterFile& file);

 private:
  struct Linear {
    ad::Tensor weight;
    ad::Tensor bias;
  };
  struct Norm {
    ad::Tensor gain;
    ad::Tensor bias;
  };
  struct Attention {
    Linear q, k, v, out;
  };
  struct Ffn {
    Linear fc1, fc2;
  };
  struct EncoderLayer {
    Attention self_attn;
    Ffn ffn;
    Norm norm1, norm2;
  };
  struct DecoderLayer {
    Attention self_attn;
    Attention cross_attn;
    Ffn ffn;
    Norm norm1, norm2, norm3;
  };
  struct Conv {
    ad::Tensor weight;
    ad::Tensor bias;
  };

  ad::Tensor add_param(const std::string& name, ad::Shape shape, std::vector<double> values);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out);
  Norm make_norm(const std::string& name, std::size_t dim);
  Attention make_attention(const std::string& name);
  Ffn make_ffn(const std::string& name);

  ad::Tensor attend(const Attention& a, const ad::Tensor& q, const ad::Tensor& k,
                    const ad::Tensor& v, ad::Tensor* weights) const;
  ad::Tensor feed_forward(const Ffn& f, const ad::Tensor& x, const ForwardOptions& opts) const;
  ad::Tensor dropout(const ad::Tensor& x, const ForwardOptions& opts) const;

  ModelConfig config_;
  std::mt19937_64 init_rng_;
  std::vector<ad::NamedTensor> params_;

  std::vector<Conv> stem_;
  Linear input_proj_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  ad::Tensor query_embed_;
  Linear human_class_, object_class_, interaction_class_;
  std::vector<Linear> human_box_, object_box_;
};

void save_model(const std::filesystem::path& path, const HoiTransformer& model);
HoiTransformer load_model(const std::filesystem::path& path);

}  // namespace hoit::model
