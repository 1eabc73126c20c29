#include "hoit/model/hoi_transformer.hpp"

#include <cmath>
#include <algorithm>

#include "hoit/ad/attention.hpp"
#include "hoit/ad/ops.hpp"
#include "hoit/errors.hpp"
#include "hoit/model/positional.hpp"

namespace hoit::model {

using ad::Tensor;

HoiPrediction HeadOutputs::prediction(std::size_t q) const {
  auto row = [q](const Tensor& t) {
    const std::size_t k = t.size(1);
    const auto v = t.values();
    return std::vector<double>(v.begin() + q * k, v.begin() + (q + 1) * k);
  };
  auto box = [q](const Tensor& t) {
    const auto v = t.values();
    return geometry::Box{v[q * 4], v[q * 4 + 1], v[q * 4 + 2], v[q * 4 + 3]};
  };
  return {row(human_logits), row(object_logits), row(interaction_logits), box(human_boxes),
          box(object_boxes)};
}

std::vector<HoiPrediction> HeadOutputs::predictions() const {
  std::vector<HoiPrediction> out;
  out.reserve(size());
  for (std::size_t q = 0; q < size(); ++q) out.push_back(prediction(q));
  return out;
}

HoiTransformer::HoiTransformer(const ModelConfig& config, std::uint64_t seed)
    : config_(config), init_rng_(seed) {
  config_.validate();
  const std::size_t d = config_.d_model;

  std::size_t in_ch = 3;
  for (std::size_t i = 0; i < config_.backbone.channels.size(); ++i) {
    const std::size_t out_ch = config_.backbone.channels[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(9 * (in_ch + out_ch)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(out_ch * 9 * in_ch);
    for (auto& x : w) x = dist(init_rng_);
    const std::string name = std::string(kBackbonePrefix) + "conv" + std::to_string(i);
    Conv conv;
    conv.weight = add_param(name + ".weight", {out_ch, 3, 3, in_ch}, std::move(w));
    conv.bias = add_param(name + ".bias", {out_ch}, std::vector<double>(out_ch, 0.0));
    stem_.push_back(conv);
    in_ch = out_ch;
  }
  input_proj_ = make_linear("input_proj", in_ch, d);

  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayer layer;
    layer.self_attn = make_attention(p + ".self_attn");
    layer.ffn = make_ffn(p + ".ffn");
    layer.norm1 = make_norm(p + ".norm1", d);
    layer.norm2 = make_norm(p + ".norm2", d);
    encoder_.push_back(layer);
  }
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecoderLayer layer;
    layer.self_attn = make_attention(p + ".self_attn");
    layer.cross_attn = make_attention(p + ".cross_attn");
    layer.ffn = make_ffn(p + ".ffn");
    layer.norm1 = make_norm(p + ".norm1", d);
    layer.norm2 = make_norm(p + ".norm2", d);
    layer.norm3 = make_norm(p + ".norm3", d);
    decoder_.push_back(layer);
  }

  std::normal_distribution<double> normal(0.0, 0.02);
  std::vector<double> q(config_.num_queries * d);
  for (auto& x : q) x = normal(init_rng_);
  query_embed_ = add_param("query_embed", {config_.num_queries, d}, std::move(q));

  human_class_ = make_linear("heads.human_class", d, 2);
  object_class_ = make_linear("heads.object_class", d, config_.num_object_classes + 1);
  interaction_class_ =
      make_linear("heads.interaction_class", d, config_.num_interaction_classes + 1);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t out = i == 2 ? 4 : d;
    human_box_.push_back(make_linear("heads.human_box." + std::to_string(i), d, out));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t out = i == 2 ? 4 : d;
    object_box_.push_back(make_linear("heads.object_box." + std::to_string(i), d, out));
  }
}

Tensor HoiTransformer::add_param(const std::string& name, ad::Shape shape,
                                 std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values), true);
  params_.push_back({name, t});
  return t;
}

HoiTransformer::Linear HoiTransformer::make_linear(const std::string& name, std::size_t in,
                                                   std::size_t out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (auto& x : w) x = dist(init_rng_);
  Linear l;
  l.weight = add_param(name + ".weight", {out, in}, std::move(w));
  l.bias = add_param(name + ".bias", {out}, std::vector<double>(out, 0.0));
  return l;
}

HoiTransformer::Norm HoiTransformer::make_norm(const std::string& name, std::size_t dim) {
  Norm n;
  n.gain = add_param(name + ".gain", {dim}, std::vector<double>(dim, 1.0));
  n.bias = add_param(name + ".bias", {dim}, std::vector<double>(dim, 0.0));
  return n;
}

HoiTransformer::Attention HoiTransformer::make_attention(const std::string& name) {
  const std::size_t d = config_.d_model;
  Attention a;
  a.q = make_linear(name + ".q_proj", d, d);
  a.k = make_linear(name + ".k_proj", d, d);
  a.v = make_linear(name + ".v_proj", d, d);
  a.out = make_linear(name + ".out_proj", d, d);
  return a;
}

HoiTransformer::Ffn HoiTransformer::make_ffn(const std::string& name) {
  Ffn f;
  f.fc1 = make_linear(name + ".fc1", config_.d_model, config_.ffn_dim);
  f.fc2 = make_linear(name + ".fc2", config_.ffn_dim, config_.d_model);
  return f;
}

std::vector<ad::NamedTensor> HoiTransformer::backbone_parameters() const {
  std::vector<ad::NamedTensor> out;
  for (const auto& p : params_) {
    if (p.name.rfind(kBackbonePrefix, 0) == 0) out.push_back(p);
  }
  return out;
}

std::vector<ad::NamedTensor> HoiTransformer::transformer_parameters() const {
  std::vector<ad::NamedTensor> out;
  for (const auto& p : params_) {
    if (p.name.rfind(kBackbonePrefix, 0) != 0) out.push_back(p);
  }
  return out;
}

Tensor HoiTransformer::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("no parameter named " + name);
}

FeatureMap HoiTransformer::backbone_forward(const Tensor& image) const {
  if (image.dim() != 3 || image.size(2) != 3) {
    throw ShapeError("image must be [H x W x 3], got " + ad::to_string(image.shape()));
  }
  const std::size_t ds = config_.backbone.downsample;
  if (image.size(0) < ds || image.size(1) < ds) {
    throw InputError("image " + std::to_string(image.size(1)) + "x" +
                     std::to_string(image.size(0)) + " is smaller than the downsample factor " +
                     std::to_string(ds));
  }
  Tensor x = image;
  for (const auto& conv : stem_) x = ad::relu(ad::conv2d(x, conv.weight, conv.bias, 2, 1));
  const std::size_t h = x.size(0);
  const std::size_t w = x.size(1);
  const Tensor flat = ad::reshape(x, {h * w, x.size(2)});
  return {h, w, ad::linear(flat, input_proj_.weight, input_proj_.bias)};
}

Tensor HoiTransformer::dropout(const Tensor& x, const ForwardOptions& opts) const {
  if (opts.dropout_rng == nullptr || config_.dropout <= 0.0) return x;
  const double keep = 1.0 - config_.dropout;
  std::bernoulli_distribution coin(keep);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = coin(*opts.dropout_rng) ? 1.0 / keep : 0.0;
  return x * Tensor(x.shape(), std::move(mask));
}

Tensor HoiTransformer::attend(const Attention& a, const Tensor& q, const Tensor& k,
                              const Tensor& v, Tensor* weights) const {
  auto r = ad::multi_head_attention(ad::linear(q, a.q.weight, a.q.bias),
                                    ad::linear(k, a.k.weight, a.k.bias),
                                    ad::linear(v, a.v.weight, a.v.bias), config_.heads);
  if (weights != nullptr) *weights = r.weights;
  return ad::linear(r.output, a.out.weight, a.out.bias);
}

Tensor HoiTransformer::feed_forward(const Ffn& f, const Tensor& x,
                                    const ForwardOptions& opts) const {
  const Tensor h = dropout(ad::relu(ad::linear(x, f.fc1.weight, f.fc1.bias)), opts);
  return ad::linear(h, f.fc2.weight, f.fc2.bias);
}

Tensor HoiTransformer::encoder_forward(const Tensor& features, const Tensor& pos,
                                       const ForwardOptions& opts) const {
  if (features.shape() != pos.shape()) {
    throw ShapeError("encoder features " + ad::to_string(features.shape()) +
                     " vs positional encoding " + ad::to_string(pos.shape()));
  }
  Tensor x = features;
  for (const auto& layer : encoder_) {
    const Tensor qk = x + pos;
    const Tensor a = attend(layer.self_attn, qk, qk, x, nullptr);
    x = ad::layer_norm(x + dropout(a, opts), layer.norm1.gain, layer.norm1.bias);
    const Tensor f = feed_forward(layer.ffn, x, opts);
    x = ad::layer_norm(x + dropout(f, opts), layer.norm2.gain, layer.norm2.bias);
  }
  return x;
}

DecoderOutput HoiTransformer::decoder_forward(const Tensor& memory, const Tensor& pos,
                                              const Tensor& queries,
                                              const ForwardOptions& opts) const {
  if (memory.shape() != pos.shape()) {
    throw ShapeError("decoder memory " + ad::to_string(memory.shape()) +
                     " vs positional encoding " + ad::to_string(pos.shape()));
  }
  if (queries.dim() != 2 || queries.size(1) != config_.d_model) {
    throw ShapeError("queries must be [N x d], got " + ad::to_string(queries.shape()));
  }
  DecoderOutput out;
  const Tensor keys = memory + pos;
  Tensor tgt = queries;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    const Tensor qk = tgt + queries;
    const Tensor s = attend(layer.self_attn, qk, qk, tgt, nullptr);
    tgt = ad::layer_norm(tgt + dropout(s, opts), layer.norm1.gain, layer.norm1.bias);
    Tensor weights;
    const Tensor c = attend(layer.cross_attn, tgt + queries, keys, memory, &weights);
    tgt = ad::layer_norm(tgt + dropout(c, opts), layer.norm2.gain, layer.norm2.bias);
    const Tensor f = feed_forward(layer.ffn, tgt, opts);
    tgt = ad::layer_norm(tgt + dropout(f, opts), layer.norm3.gain, layer.norm3.bias);
    if (l + 1 == decoder_.size()) out.cross_attention = ad::mean_over_heads(weights);
  }
  out.embeddings = tgt;
  return out;
}

HeadOutputs HoiTransformer::heads_forward(const Tensor& embeddings) const {
  auto mlp = [&](const std::vector<Linear>& layers) {
    Tensor h = embeddings;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = ad::linear(h, layers[i].weight, layers[i].bias);
      h = i + 1 < layers.size() ? ad::relu(h) : ad::sigmoid(h);
    }
    return h;
  };
  HeadOutputs out;
  out.human_logits = ad::linear(embeddings, human_class_.weight, human_class_.bias);
  out.object_logits = ad::linear(embeddings, object_class_.weight, object_class_.bias);
  out.interaction_logits =
      ad::linear(embeddings, interaction_class_.weight, interaction_class_.bias);
  out.human_boxes = mlp(human_box_);
  out.object_boxes = mlp(object_box_);
  return out;
}

ForwardOutput HoiTransformer::forward(const Tensor& image, const ForwardOptions& opts) const {
  const FeatureMap fm = backbone_forward(image);
  const Tensor pos = positional_encoding(fm.height, fm.width, config_.d_model);
  const Tensor memory = encoder_forward(fm.sequence, pos, opts);
  DecoderOutput dec = decoder_forward(memory, pos, query_embed_, opts);
  ForwardOutput out;
  out.heads = heads_forward(dec.embeddings);
  out.cross_attention = dec.cross_attention;
  out.feature_height = fm.height;
  out.feature_width = fm.width;
  return out;
}

ad::ParameterFile HoiTransformer::to_parameter_file() const {
  ad::ParameterFile file;
  file.metadata = config_.to_json();
  for (const auto& p : params_) file.put(p.name, p.tensor);
  return file;
}

void HoiTransformer::load_parameters(const ad::ParameterFile& file) {
  for (auto& p : params_) {
    if (!file.contains(p.name)) throw ConfigError("checkpoint is missing parameter " + p.name);
    const auto& e = file.at(p.name);
    if (e.shape != p.tensor.shape()) {
      throw ConfigError("checkpoint parameter " + p.name + " has shape " +
                        ad::to_string(e.shape) + ", model expects " +
                        ad::to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(e.values.begin(), e.values.end(), dst.begin());
  }
}

HoiTransformer HoiTransformer::from_parameter_file(const ad::ParameterFile& file) {
  HoiTransformer model(ModelConfig::from_json(file.metadata), 0);
  model.load_parameters(file);
  return model;
}

void save_model(const std::filesystem::path& path, const HoiTransformer& model) {
  ad::save_parameter_file(path, model.to_parameter_file());
}

HoiTransformer load_model(const std::filesystem::path& path) {
  return HoiTransformer::from_parameter_file(ad::load_parameter_file(path));
}

}  // namespace hoit::model
