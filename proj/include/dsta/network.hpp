#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsta/attention.hpp"
#include "dsta/checkpoint.hpp"
#include "dsta/tensor.hpp"

namespace dsta {

// One spatial-temporal layer: a spatial attention module lifting to c_out,
// then a temporal attention module at c_out.
struct LayerSpec {
  std::size_t c_out = 0;
  std::size_t heads = 3;
  std::size_t c_e = 0;  // 0 means the default c_out/4 (at least 1)
  Strategy strategy = Strategy::c;
  bool use_sgr = true;
  double alpha = 1.0;

  std::size_t embed_width() const { return c_e > 0 ? c_e : std::max<std::size_t>(1, c_out / 4); }
};

struct NetworkConfig {
  std::size_t num_joints = 0;
  std::size_t num_frames = 0;
  std::size_t in_channels = 0;
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;
  ScoreNorm score_norm = ScoreNorm::tanh;
  bool scale_logits = true;
  bool score_mean = true;
  double lrelu_slope = 0.01;

  void validate() const {
    if (num_joints < 1) throw std::invalid_argument("num_joints must be positive");
    if (num_frames < 1) throw std::invalid_argument("num_frames must be positive");
    if (in_channels < 1) throw std::invalid_argument("in_channels must be positive");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be positive");
    if (layers.empty()) throw std::invalid_argument("layers must be non-empty");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      if (l.c_out < 1 || l.heads < 1 || l.embed_width() < 1) {
        throw std::invalid_argument("layers[" + std::to_string(i) +
                                    "]: c_out, heads and c_e must be positive");
      }
    }
  }

  // The stock recipe: 8 layers, 3 heads, channels 64,64,128,128,256,256,256,256.
  static NetworkConfig defaults() {
    NetworkConfig cfg;
    cfg.num_joints = 25;
    cfg.num_frames = 128;
    cfg.in_channels = 3;
    cfg.num_classes = 60;
    for (std::size_t c : {64, 64, 128, 128, 256, 256, 256, 256}) {
      LayerSpec l;
      l.c_out = c;
      l.heads = 3;
      cfg.layers.push_back(l);
    }
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Config document (JSON) parsing with precise error positions
// ---------------------------------------------------------------------------

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void config_error(const std::string& context, const std::string& path,
                                      const std::string& what) {
  throw ParseError(context + ": " + path + ": " + what);
}

inline void require_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& context, const std::string& path) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == item.key();
    if (!ok) config_error(context, path + "/" + item.key(), "unknown key");
  }
}

inline std::size_t get_positive(const json& obj, const char* key, const std::string& context,
                                const std::string& path) {
  if (!obj.contains(key)) config_error(context, path + "/" + key, "missing required key");
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    config_error(context, path + "/" + key, "expected a positive integer");
  }
  return v.get<std::size_t>();
}

}  // namespace detail

inline NetworkConfig parse_network_config_json(const std::string& text,
                                               const std::string& context) {
  detail::json doc;
  try {
    doc = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ParseError(context + ": " + e.what());
  }
  if (!doc.is_object()) detail::config_error(context, "", "expected a JSON object");
  detail::require_keys(doc,
                       {"num_joints", "num_frames", "in_channels", "num_classes", "layers",
                        "score_norm", "scale_logits", "score_mean", "lrelu_slope"},
                       context, "");
  NetworkConfig cfg;
  cfg.num_joints = detail::get_positive(doc, "num_joints", context, "");
  cfg.num_frames = detail::get_positive(doc, "num_frames", context, "");
  cfg.in_channels = detail::get_positive(doc, "in_channels", context, "");
  cfg.num_classes = detail::get_positive(doc, "num_classes", context, "");

  if (doc.contains("score_norm")) {
    const auto s = doc.at("score_norm").get<std::string>();
    if (s == "tanh")
      cfg.score_norm = ScoreNorm::tanh;
    else if (s == "softmax")
      cfg.score_norm = ScoreNorm::softmax;
    else
      detail::config_error(context, "/score_norm", "expected \"tanh\" or \"softmax\"");
  }
  if (doc.contains("scale_logits")) {
    if (!doc.at("scale_logits").is_boolean())
      detail::config_error(context, "/scale_logits", "expected a boolean");
    cfg.scale_logits = doc.at("scale_logits").get<bool>();
  }
  if (doc.contains("score_mean")) {
    if (!doc.at("score_mean").is_boolean())
      detail::config_error(context, "/score_mean", "expected a boolean");
    cfg.score_mean = doc.at("score_mean").get<bool>();
  }
  if (doc.contains("lrelu_slope")) {
    if (!doc.at("lrelu_slope").is_number())
      detail::config_error(context, "/lrelu_slope", "expected a number");
    cfg.lrelu_slope = doc.at("lrelu_slope").get<double>();
  }

  if (!doc.contains("layers") || !doc.at("layers").is_array() || doc.at("layers").empty()) {
    detail::config_error(context, "/layers", "expected a non-empty array");
  }
  std::size_t li = 0;
  for (const auto& lj : doc.at("layers")) {
    const std::string lpath = "/layers/" + std::to_string(li);
    if (!lj.is_object()) detail::config_error(context, lpath, "expected an object");
    detail::require_keys(lj, {"c_out", "heads", "c_e", "strategy", "use_sgr", "alpha"},
                         context, lpath);
    LayerSpec l;
    l.c_out = detail::get_positive(lj, "c_out", context, lpath);
    if (lj.contains("heads")) l.heads = detail::get_positive(lj, "heads", context, lpath);
    if (lj.contains("c_e")) l.c_e = detail::get_positive(lj, "c_e", context, lpath);
    if (lj.contains("strategy")) {
      try {
        l.strategy = parse_strategy(lj.at("strategy").get<std::string>());
      } catch (const std::exception& e) {
        detail::config_error(context, lpath + "/strategy", e.what());
      }
    }
    if (lj.contains("use_sgr")) {
      if (!lj.at("use_sgr").is_boolean())
        detail::config_error(context, lpath + "/use_sgr", "expected a boolean");
      l.use_sgr = lj.at("use_sgr").get<bool>();
    }
    if (lj.contains("alpha")) {
      if (!lj.at("alpha").is_number())
        detail::config_error(context, lpath + "/alpha", "expected a number");
      l.alpha = lj.at("alpha").get<double>();
    }
    cfg.layers.push_back(l);
    ++li;
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(context + ": " + e.what());
  }
  return cfg;
}

inline std::string network_config_to_json(const NetworkConfig& cfg) {
  detail::json doc;
  doc["num_joints"] = cfg.num_joints;
  doc["num_frames"] = cfg.num_frames;
  doc["in_channels"] = cfg.in_channels;
  doc["num_classes"] = cfg.num_classes;
  doc["score_norm"] = cfg.score_norm == ScoreNorm::tanh ? "tanh" : "softmax";
  doc["scale_logits"] = cfg.scale_logits;
  doc["score_mean"] = cfg.score_mean;
  doc["lrelu_slope"] = cfg.lrelu_slope;
  doc["layers"] = detail::json::array();
  for (const LayerSpec& l : cfg.layers) {
    detail::json lj;
    lj["c_out"] = l.c_out;
    lj["heads"] = l.heads;
    lj["c_e"] = l.embed_width();
    lj["strategy"] = strategy_name(l.strategy);
    lj["use_sgr"] = l.use_sgr;
    lj["alpha"] = l.alpha;
    doc["layers"].push_back(lj);
  }
  return doc.dump(2);
}

inline NetworkConfig load_network_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_network_config_json(text, path.string());
}

// ---------------------------------------------------------------------------
// Parameter counting (derivable from the config alone)
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t module_param_count(std::size_t c_in, std::size_t c_e, std::size_t c_out,
                                      std::size_t heads, bool sgr, std::size_t joints) {
  std::size_t n = heads * 2 * (c_in * c_e + c_e);          // sigma and phi per head
  n += c_in * heads * c_out + c_out;                       // output projection
  n += 2 * (c_out * c_out + c_out);                        // feed-forward pair
  if (c_in != c_out) n += c_in * c_out + c_out;            // residual projection
  if (sgr) n += joints * joints;                           // global map
  return n;
}

}  // namespace detail

inline std::size_t param_count(const NetworkConfig& cfg) {
  cfg.validate();
  std::size_t total = 0;
  std::size_t c_in = cfg.in_channels;
  for (const LayerSpec& l : cfg.layers) {
    total += detail::module_param_count(c_in, l.embed_width(), l.c_out, l.heads, l.use_sgr,
                                        cfg.num_joints);
    total += detail::module_param_count(l.c_out, l.embed_width(), l.c_out, l.heads, false,
                                        cfg.num_joints);
    c_in = l.c_out;
  }
  total += c_in * cfg.num_classes + cfg.num_classes;  // classifier
  return total;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

class Network {
 public:
  Network(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    std::size_t c_in = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      const LayerSpec& l = cfg_.layers[i];
      const std::string prefix = "layer" + std::to_string(i);
      AttentionConfig sp;
      sp.axis = Axis::spatial;
      sp.strategy = l.strategy;
      sp.heads = l.heads;
      sp.c_in = c_in;
      sp.c_e = l.embed_width();
      sp.c_out = l.c_out;
      sp.use_sgr = l.use_sgr;
      sp.alpha = l.alpha;
      sp.score_norm = cfg_.score_norm;
      sp.scale_logits = cfg_.scale_logits;
      sp.score_mean = cfg_.score_mean;
      sp.lrelu_slope = cfg_.lrelu_slope;
      spatial_.emplace_back(sp, cfg_.num_joints, cfg_.num_frames, prefix + ".spatial", rng,
                            registry_);

      AttentionConfig te = sp;
      te.axis = Axis::temporal;
      te.c_in = l.c_out;
      te.use_sgr = false;  // no semantic alignment across frames
      temporal_.emplace_back(te, cfg_.num_joints, cfg_.num_frames, prefix + ".temporal", rng,
                             registry_);
      c_in = l.c_out;
    }
    const double bound = std::sqrt(1.0 / static_cast<double>(c_in));
    fc_w_ = registry_.add("fc.w",
                          Tensor::uniform({c_in, cfg_.num_classes}, rng, -bound, bound));
    fc_b_ = registry_.add("fc.b", Tensor::uniform({cfg_.num_classes}, rng, -bound, bound));
  }

  const NetworkConfig& config() const { return cfg_; }
  ParamRegistry& registry() { return registry_; }
  const ParamRegistry& registry() const { return registry_; }
  std::vector<ParameterPtr>& params() { return registry_.params(); }

  // x: [N x T x C] -> [1 x K]
  Tensor forward_sample(const Tensor& x, std::vector<AttentionMap>* capture = nullptr) const {
    Tensor cur = x;
    for (std::size_t i = 0; i < spatial_.size(); ++i) {
      cur = spatial_[i].forward(cur, capture, i);
      cur = temporal_[i].forward(cur, capture, i);
    }
    Tensor pooled = mean_pool(cur);
    return linear(pooled.reshape({1, pooled.size()}), fc_w_->tensor, fc_b_->tensor);
  }

  // batch: [B x N x T x C] -> logits [B x K]
  Tensor forward(const Tensor& batch) const {
    if (batch.ndim() != 4 || batch.dim(1) != cfg_.num_joints ||
        batch.dim(2) != cfg_.num_frames || batch.dim(3) != cfg_.in_channels) {
      throw ShapeError("network expects [Bx" + std::to_string(cfg_.num_joints) + "x" +
                       std::to_string(cfg_.num_frames) + "x" +
                       std::to_string(cfg_.in_channels) + "], got " +
                       shape_str(batch.shape()));
    }
    const std::size_t b = batch.dim(0);
    const std::size_t stride = cfg_.num_joints * cfg_.num_frames * cfg_.in_channels;
    std::vector<Tensor> logits;
    logits.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
      Tensor sample({cfg_.num_joints, cfg_.num_frames, cfg_.in_channels});
      std::copy(batch.data() + i * stride, batch.data() + (i + 1) * stride, sample.data());
      logits.push_back(forward_sample(sample));
    }
    return concat_first(logits);
  }

  // One map per (layer, head, axis), captured during a forward pass.
  std::vector<AttentionMap> export_attention(const Tensor& sample) const {
    std::vector<AttentionMap> maps;
    forward_sample(sample, &maps);
    return maps;
  }

  // The module sequence, e.g. {"layer0.spatial", "layer0.temporal", ...}.
  std::vector<std::string> pipeline_description() const {
    std::vector<std::string> desc;
    for (std::size_t i = 0; i < spatial_.size(); ++i) {
      desc.push_back("layer" + std::to_string(i) + ".spatial");
      desc.push_back("layer" + std::to_string(i) + ".temporal");
    }
    return desc;
  }

  void save(const std::filesystem::path& path) const {
    save_checkpoint(path, network_config_to_json(cfg_), registry_.params());
  }

  static Network load(const std::filesystem::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    NetworkConfig cfg = parse_network_config_json(ckpt.config_json, path.string());
    Network net(cfg, 0);
    for (auto& p : net.registry_.params()) {
      const CheckpointParam* cp = ckpt.find(p->name);
      if (!cp) {
        throw ParseError(path.string() + ": checkpoint is missing parameter '" + p->name +
                         "'");
      }
      if (cp->shape != p->tensor.shape()) {
        throw ParseError(path.string() + ": parameter '" + p->name + "' has shape " +
                         shape_str(cp->shape) + ", expected " + shape_str(p->tensor.shape()));
      }
      p->tensor.values() = cp->values;
    }
    return net;
  }

 private:
  NetworkConfig cfg_;
  ParamRegistry registry_;
  std::vector<AttentionModule> spatial_;
  std::vector<AttentionModule> temporal_;
  ParameterPtr fc_w_, fc_b_;
};

}  // namespace dsta
