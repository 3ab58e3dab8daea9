#include "siatrans/model.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace siatrans {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': expected an unsigned integer, got '" + text + "'");
  }
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument("bad");
    return v;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': expected a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw DataError("config key '" + key + "': expected true/false, got '" + text + "'");
}

struct Field {
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field size_field(T ModelConfig::*part, std::size_t T::*member) {
  return {[=](const ModelConfig& c) { return std::to_string(c.*part.*member); },
          [=](ModelConfig& c, const std::string& k, const std::string& v) { c.*part.*member = parse_size(k, v); }};
}

template <typename T>
Field real_field(T ModelConfig::*part, double T::*member) {
  return {[=](const ModelConfig& c) { return format_double(c.*part.*member); },
          [=](ModelConfig& c, const std::string& k, const std::string& v) { c.*part.*member = parse_real(k, v); }};
}

template <typename T>
Field bool_field(T ModelConfig::*part, bool T::*member) {
  return {[=](const ModelConfig& c) { return std::string(c.*part.*member ? "true" : "false"); },
          [=](ModelConfig& c, const std::string& k, const std::string& v) { c.*part.*member = parse_bool(k, v); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table{
      {"image_size", size_field(&ModelConfig::encoder, &EncoderConfig::image_size)},
      {"t2t_dim", size_field(&ModelConfig::encoder, &EncoderConfig::t2t_dim)},
      {"t2t_mlp_ratio", real_field(&ModelConfig::encoder, &EncoderConfig::t2t_mlp_ratio)},
      {"embed_dim", size_field(&ModelConfig::encoder, &EncoderConfig::embed_dim)},
      {"depth", size_field(&ModelConfig::encoder, &EncoderConfig::depth)},
      {"heads", size_field(&ModelConfig::encoder, &EncoderConfig::heads)},
      {"mlp_ratio", real_field(&ModelConfig::encoder, &EncoderConfig::mlp_ratio)},
      {"siamese", bool_field(&ModelConfig::encoder, &EncoderConfig::siamese)},
      {"cmf_dim", size_field(&ModelConfig::cmf, &CmfConfig::dim)},
      {"cmf_interactive_layers", size_field(&ModelConfig::cmf, &CmfConfig::interactive_layers)},
      {"cmf_transformer_layers", size_field(&ModelConfig::cmf, &CmfConfig::transformer_layers)},
      {"cmf_heads", size_field(&ModelConfig::cmf, &CmfConfig::heads)},
      {"cmf_mlp_ratio", real_field(&ModelConfig::cmf, &CmfConfig::mlp_ratio)},
      {"interactive", bool_field(&ModelConfig::cmf, &CmfConfig::interactive)},
      {"decoder_width", size_field(&ModelConfig::decoder, &DecoderConfig::width)},
      {"adaptive_fusion", bool_field(&ModelConfig::decoder, &DecoderConfig::adaptive_fusion)},
      {"seed",
       {[](const ModelConfig& c) { return std::to_string(c.seed); },
        [](ModelConfig& c, const std::string& k, const std::string& v) { c.seed = parse_size(k, v); }}},
  };
  return table;
}

}  // namespace

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  return c.sync();
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.encoder.image_size = 64;
  c.encoder.t2t_dim = 32;
  c.encoder.embed_dim = 64;
  c.encoder.depth = 2;
  c.encoder.heads = 2;
  c.cmf.dim = 32;
  c.decoder.width = 16;
  return c.sync();
}

ModelConfig& ModelConfig::sync() {
  cmf.in_dim = encoder.embed_dim;
  decoder.image_size = encoder.image_size;
  decoder.fused_dim = cmf.dim;
  decoder.side_dim = encoder.t2t_dim;
  return *this;
}

void ModelConfig::validate() const {
  encoder.validate();
  cmf.attention().validate();
  if (cmf.in_dim != encoder.embed_dim || decoder.fused_dim != cmf.dim || decoder.side_dim != encoder.t2t_dim ||
      decoder.image_size != encoder.image_size) {
    throw UsageError("model config widths are inconsistent; call sync()");
  }
  if (decoder.width == 0) throw UsageError("decoder width must be positive");
}

std::string ModelConfig::canonical() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(*this) + "\n";
  return out;
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, key, value);
      sync();
      return;
    }
  }
  throw DataError("unknown config key '" + key + "'");
}

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("config line without '=': " + line);
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return c.sync();
}

SiaTrans::SiaTrans(const ModelConfig& config) : config_(config) {
  config_.sync();
  config_.validate();
  Rng rng(config_.seed);
  const Scope root(store_, "");
  encoder_ = Encoder::create(root.sub("encoder"), config_.encoder, rng);
  if (!config_.encoder.siamese) depth_encoder_ = Encoder::create(root.sub("depth_encoder"), config_.encoder, rng);
  const std::size_t D = config_.encoder.embed_dim;
  class_head_ = Linear::create(root.sub("class_head"), D, 1, rng);
  rough_head_ = Linear::create(root.sub("rough_head"), D, 1, rng);
  cmf_ = Cmf::create(root.sub("cmf"), config_.cmf, rng);
  fused_head_ = Linear::create(root.sub("fused_head"), config_.cmf.dim, 1, rng);
  decoder_ = Decoder::create(root.sub("decoder"), config_.decoder, rng);
}

EncoderOutput SiaTrans::encode(const Tensor& rgb, const Tensor& depth3) const {
  if (depth_encoder_) return two_stream_forward(encoder_, *depth_encoder_, rgb, depth3);
  return siamese_forward(encoder_, rgb, depth3);
}

ForwardResult SiaTrans::forward(const Tensor& rgb, const Tensor& depth3, const ForwardOptions& options) const {
  const std::size_t S = config_.encoder.image_size;
  const std::size_t B = rgb.size(0);
  const auto enc = encode(rgb, depth3);
  const auto rgb_rows = enc.rows_slice(0, B);
  const auto depth_rows = enc.rows_slice(B, B);

  ForwardResult r;
  r.maps[0] = rough_saliency_head(rgb_rows.top, rough_head_, S);
  r.maps[1] = rough_saliency_head(depth_rows.top, rough_head_, S);
  r.class_logits = class_logit(depth_rows.class_tokens, class_head_);

  for (std::size_t b = 0; b < B; ++b) {
    const double p = 1.0 / (1.0 + std::exp(-r.class_logits.data()[b]));
    r.probabilities.push_back(p);
    r.gate_mae.push_back(
        mae_between_maps(SaliencyMap::from_tensor(r.maps[0], b), SaliencyMap::from_tensor(r.maps[1], b)));
    switch (options.policy) {
      case GatePolicy::Cross: r.modes.push_back(FusionMode::Cross); break;
      case GatePolicy::Self: r.modes.push_back(FusionMode::Self); break;
      case GatePolicy::Gated: r.modes.push_back(quality_gate(p, r.gate_mae.back())); break;
    }
  }

  const auto fused = cmf_(rgb_rows.top.tokens, depth_rows.top.tokens, r.modes);
  r.maps[2] = rough_saliency_head(TokenSequence{fused, false}, fused_head_, S);
  r.decoder = decoder_(fused, rgb_rows.side1, rgb_rows.side2, options.training);
  for (std::size_t i = 0; i < 3; ++i) r.maps[3 + i] = r.decoder.side_maps[i];
  r.maps[6] = r.decoder.final_map;
  return r;
}

}  // namespace siatrans
