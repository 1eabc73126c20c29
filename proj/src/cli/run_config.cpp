#include "hoit/cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hoit/errors.hpp"

namespace hoit::cli {

namespace {

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& expected, const std::string& value) {
  throw ConfigError(key + ": expected " + expected + ", got '" + value + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

Field size_field(const std::string& key, std::size_t& ref) {
  return {[&ref, key](const std::string& v) {
            std::size_t out = 0;
            const auto* end = v.data() + v.size();
            const auto [ptr, ec] = std::from_chars(v.data(), end, out);
            if (v.empty() || ec != std::errc() || ptr != end) bad_value(key, "a non-negative integer", v);
            ref = out;
          },
          [&ref] { return std::to_string(ref); }};
}

Field u64_field(const std::string& key, std::uint64_t& ref) {
  return {[&ref, key](const std::string& v) {
            std::uint64_t out = 0;
            const auto* end = v.data() + v.size();
            const auto [ptr, ec] = std::from_chars(v.data(), end, out);
            if (v.empty() || ec != std::errc() || ptr != end) bad_value(key, "a non-negative integer", v);
            ref = out;
          },
          [&ref] { return std::to_string(ref); }};
}

Field double_field(const std::string& key, double& ref) {
  return {[&ref, key](const std::string& v) {
            double out = 0.0;
            const auto* end = v.data() + v.size();
            const auto [ptr, ec] = std::from_chars(v.data(), end, out);
            if (v.empty() || ec != std::errc() || ptr != end) bad_value(key, "a number", v);
            ref = out;
          },
          [&ref] { return format_double(ref); }};
}

Field bool_field(const std::string& key, bool& ref) {
  return {[&ref, key](const std::string& v) {
            std::string l = v;
            std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
            if (l == "true" || l == "1" || l == "yes" || l == "on") {
              ref = true;
            } else if (l == "false" || l == "0" || l == "no" || l == "off") {
              ref = false;
            } else {
              bad_value(key, "a boolean", v);
            }
          },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field path_field(std::filesystem::path& ref, const std::filesystem::path& base) {
  return {[&ref, base](const std::string& v) {
            const std::filesystem::path p(v);
            ref = v.empty() || p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
          },
          [&ref] { return ref.string(); }};
}

Field channels_field(const std::string& key, std::vector<std::size_t>& ref) {
  return {[&ref, key](const std::string& v) {
            std::vector<std::size_t> out;
            std::stringstream ss(v);
            for (std::string item; std::getline(ss, item, ',');) {
              item = trim(item);
              std::size_t c = 0;
              const auto* end = item.data() + item.size();
              const auto [ptr, ec] = std::from_chars(item.data(), end, c);
              if (item.empty() || ec != std::errc() || ptr != end) bad_value(key, "a comma-separated list of integers", v);
              out.push_back(c);
            }
            if (out.empty()) bad_value(key, "a comma-separated list of integers", v);
            ref = out;
          },
          [&ref] {
            std::string s;
            for (std::size_t i = 0; i < ref.size(); ++i) s += (i ? "," : "") + std::to_string(ref[i]);
            return s;
          }};
}

Field score_field(eval::ScoreMode& ref) {
  return {[&ref](const std::string& v) { ref = eval::parse_score_mode(v); },
          [&ref] { return eval::score_mode_name(ref); }};
}

// Ordered so the dump reads section by section.
std::vector<std::pair<std::string, Field>> fields(RunConfig& c, const std::filesystem::path& base) {
  std::vector<std::pair<std::string, Field>> f;
  auto add = [&](const std::string& key, auto make) { f.emplace_back(key, make(key)); };
  auto& m = c.model;
  add("model.d_model", [&](const std::string& k) { return size_field(k, m.d_model); });
  add("model.encoder_layers", [&](const std::string& k) { return size_field(k, m.encoder_layers); });
  add("model.decoder_layers", [&](const std::string& k) { return size_field(k, m.decoder_layers); });
  add("model.heads", [&](const std::string& k) { return size_field(k, m.heads); });
  add("model.ffn_dim", [&](const std::string& k) { return size_field(k, m.ffn_dim); });
  add("model.num_queries", [&](const std::string& k) { return size_field(k, m.num_queries); });
  add("model.dropout", [&](const std::string& k) { return double_field(k, m.dropout); });
  add("model.backbone_channels", [&](const std::string& k) { return channels_field(k, m.backbone.channels); });
  add("model.downsample", [&](const std::string& k) { return size_field(k, m.backbone.downsample); });

  auto& t = c.train;
  add("train.epochs", [&](const std::string& k) { return size_field(k, t.epochs); });
  add("train.lr_drop", [&](const std::string& k) { return size_field(k, t.lr_drop); });
  add("train.lr_transformer", [&](const std::string& k) { return double_field(k, t.lr_transformer); });
  add("train.lr_backbone", [&](const std::string& k) { return double_field(k, t.lr_backbone); });
  add("train.weight_decay", [&](const std::string& k) { return double_field(k, t.weight_decay); });
  add("train.clip_norm", [&](const std::string& k) { return double_field(k, t.clip_norm); });
  add("train.batch_size", [&](const std::string& k) { return size_field(k, t.batch_size); });
  add("train.seed", [&](const std::string& k) { return u64_field(k, t.seed); });
  add("train.eval_interval", [&](const std::string& k) { return size_field(k, t.eval_interval); });
  add("train.target_map", [&](const std::string& k) { return double_field(k, t.target_map); });
  add("train.augment", [&](const std::string& k) { return bool_field(k, t.augment); });
  add("train.threads", [&](const std::string& k) { return size_field(k, c.threads); });

  auto& w = t.weights;
  add("match.alpha_h", [&](const std::string& k) { return double_field(k, w.alpha_h); });
  add("match.alpha_o", [&](const std::string& k) { return double_field(k, w.alpha_o); });
  add("match.alpha_r", [&](const std::string& k) { return double_field(k, w.alpha_r); });
  add("match.beta1", [&](const std::string& k) { return double_field(k, w.beta1); });
  add("match.beta2", [&](const std::string& k) { return double_field(k, w.beta2); });
  add("match.giou_w", [&](const std::string& k) { return double_field(k, w.giou_w); });
  add("match.l1_w", [&](const std::string& k) { return double_field(k, w.l1_w); });
  add("match.background_weight", [&](const std::string& k) { return double_field(k, w.background_weight); });

  auto& a = t.augmentation;
  add("augment.color", [&](const std::string& k) { return bool_field(k, a.color); });
  add("augment.flip", [&](const std::string& k) { return bool_field(k, a.flip); });
  add("augment.scale", [&](const std::string& k) { return bool_field(k, a.scale); });
  add("augment.crop", [&](const std::string& k) { return bool_field(k, a.crop); });
  add("augment.color_prob", [&](const std::string& k) { return double_field(k, a.color_prob); });
  add("augment.jitter_lo", [&](const std::string& k) { return double_field(k, a.jitter_lo); });
  add("augment.jitter_hi", [&](const std::string& k) { return double_field(k, a.jitter_hi); });
  add("augment.flip_prob", [&](const std::string& k) { return double_field(k, a.flip_prob); });
  add("augment.scale_min", [&](const std::string& k) { return size_field(k, a.scale_min); });
  add("augment.scale_max", [&](const std::string& k) { return size_field(k, a.scale_max); });
  add("augment.max_size", [&](const std::string& k) { return size_field(k, a.max_size); });
  add("augment.crop_prob", [&](const std::string& k) { return double_field(k, a.crop_prob); });
  add("augment.crop_min_fraction", [&](const std::string& k) { return double_field(k, a.crop_min_fraction); });
  add("augment.crop_retries", [&](const std::string& k) { return size_field(k, a.crop_retries); });

  f.emplace_back("data.annotations", path_field(c.annotations, base));
  f.emplace_back("data.manifest", path_field(c.manifest, base));
  f.emplace_back("data.eval_annotations", path_field(c.eval_annotations, base));

  add("infer.threshold", [&](const std::string& k) { return double_field(k, c.infer.threshold); });
  add("infer.top_k", [&](const std::string& k) { return size_field(k, c.infer.top_k); });
  f.emplace_back("infer.score", score_field(c.infer.score));

  f.emplace_back("output.dir", path_field(c.output_dir, base));
  return f;
}

void set_key(RunConfig& c, const std::filesystem::path& base, const std::string& key, const std::string& value) {
  for (auto& [name, field] : fields(c, base)) {
    if (name == key) {
      field.set(trim(value));
      return;
    }
  }
  throw ConfigError(key + ": unknown key");
}

}  // namespace

void RunConfig::validate() const {
  // Class counts come from the manifest; check the rest with placeholders.
  model.validate();
  train.validate();
  infer.validate();
  if (threads == 0) throw ConfigError("train.threads: must be positive");
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section + ": key outside of a section");
    for (const auto& [key, value] : body) set_key(c, base_dir, section + "." + key, value.data());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_run_config(s.str(), path.parent_path());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected section.key=value");
  set_key(config, {}, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string dump_run_config(const RunConfig& config) {
  RunConfig copy = config;
  std::ostringstream out;
  std::string section;
  for (const auto& [key, field] : fields(copy, {})) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << field.get() << '\n';
  }
  return out.str();
}

}  // namespace hoit::cli
