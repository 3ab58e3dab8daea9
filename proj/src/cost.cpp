#include "siatrans/cost.hpp"

#include <iomanip>
#include <ostream>

namespace siatrans {

namespace {

using u64 = std::uint64_t;

struct Acc {
  CostItem item;

  void linear(u64 tokens, u64 in, u64 out, bool bias = true) {
    item.params += linear_params(in, out, bias);
    item.macs += tokens * in * out;
  }
  void norm(u64 dim) { item.params += 2 * dim; }
  void conv(u64 in, u64 out, u64 k, u64 side) {
    item.params += conv_params(in, out, k);
    item.macs += conv_macs(in, out, k, side, side);
  }
};

// One attention + FFN block over `tokens` query rows, run `passes` times.
void attention_block(Acc& a, u64 tokens, const AttentionConfig& c, u64 passes) {
  const u64 d = c.dim, h = c.ffn_hidden;
  a.item.params += 3 * linear_params(d, d, c.qkv_bias) + linear_params(d, d) + linear_params(d, h) +
                   linear_params(h, d) + 4 * d;
  a.item.macs += passes * tokens * (4 * d * d + 2 * d * h);
  a.item.attention_macs += passes * 2 * tokens * tokens * d;
}

void token_transformer(Acc& a, u64 tokens, u64 in, u64 dim, double ratio, u64 passes) {
  const auto hidden = static_cast<u64>(static_cast<double>(dim) * ratio);
  a.norm(in);
  a.item.params += 3 * linear_params(in, dim, false) + linear_params(dim, dim) + linear_params(dim, hidden) +
                   linear_params(hidden, dim);
  a.norm(dim);
  a.item.macs += passes * tokens * (3 * in * dim + dim * dim + 2 * dim * hidden);
  a.item.attention_macs += passes * 2 * tokens * tokens * dim;
}

CostItem encoder_cost(const EncoderConfig& e, u64 passes) {
  Acc a;
  a.item.name = "encoder";
  const auto g = e.grids();
  const auto& sp = e.splits;
  const u64 c = e.t2t_dim, D = e.embed_dim;
  const u64 l1 = g[0] * g[0], l2 = g[1] * g[1], l3 = g[2] * g[2];
  token_transformer(a, l1, 3 * sp[0].kernel * sp[0].kernel, c, e.t2t_mlp_ratio, passes);
  token_transformer(a, l2, c * sp[1].kernel * sp[1].kernel, c, e.t2t_mlp_ratio, passes);
  a.item.params += linear_params(c * sp[2].kernel * sp[2].kernel, D);
  a.item.macs += passes * l3 * c * sp[2].kernel * sp[2].kernel * D;
  a.item.params += D + (l3 + 1) * D;
  const auto attn = AttentionConfig::with_ratio(D, e.heads, e.mlp_ratio);
  for (std::size_t i = 0; i < e.depth; ++i) attention_block(a, l3 + 1, attn, passes);
  a.norm(D);
  return a.item;
}

}  // namespace

std::uint64_t linear_params(std::uint64_t in, std::uint64_t out, bool bias) { return in * out + (bias ? out : 0); }

std::uint64_t conv_params(std::uint64_t in, std::uint64_t out, std::uint64_t k, bool bias) {
  return out * in * k * k + (bias ? out : 0);
}

std::uint64_t conv_macs(std::uint64_t in, std::uint64_t out, std::uint64_t k, std::uint64_t h_out,
                        std::uint64_t w_out) {
  return out * in * k * k * h_out * w_out;
}

const CostItem& CostReport::item(const std::string& name) const {
  for (const auto& i : breakdown) {
    if (i.name == name) return i;
  }
  throw UsageError("no cost item named '" + name + "'");
}

CostReport count_cost(ModelConfig config, std::size_t input_size) {
  config.encoder.image_size = input_size;
  config.sync();
  config.validate();
  const auto& e = config.encoder;
  const u64 S = input_size, D = e.embed_dim;
  const u64 tokens = e.tokens();

  CostReport r;
  r.input_size = input_size;
  if (e.siamese) {
    r.breakdown.push_back(encoder_cost(e, 2));
  } else {
    auto both = encoder_cost(e, 1);
    both.params *= 2;
    both.macs *= 2;
    both.attention_macs *= 2;
    r.breakdown.push_back(both);
  }

  Acc heads;
  heads.item.name = "heads";
  heads.linear(1, D, 1);              // class head, depth rows
  heads.linear(2 * tokens, D, 1);     // rough head, both streams
  heads.linear(tokens, config.cmf.dim, 1);
  r.breakdown.push_back(heads.item);

  const auto& m = config.cmf;
  const auto attn = m.attention();
  Acc proj;
  proj.item.name = "cmf_projection";
  proj.linear(2 * tokens, m.in_dim, m.dim);
  r.breakdown.push_back(proj.item);

  Acc inter;
  inter.item.name = "cmf_interactive";
  for (std::size_t i = 0; i < m.interactive_layers; ++i) attention_block(inter, tokens, attn, 2);
  r.breakdown.push_back(inter.item);

  Acc layers;
  layers.item.name = "cmf_transformer";
  for (std::size_t i = 0; i < m.transformer_layers; ++i) attention_block(layers, tokens, attn, 1);
  r.breakdown.push_back(layers.item);

  const auto& dc = config.decoder;
  const u64 w = dc.width;
  Acc dec;
  dec.item.name = "decoder";
  dec.conv(dc.side_dim, w, 1, S / 4);
  dec.conv(dc.side_dim, w, 1, S / 8);
  const u64 block_in[3] = {dc.fused_dim, w, w};
  const u64 block_side[3] = {S / 8, S / 4, S / 2};
  for (int i = 0; i < 3; ++i) {
    dec.conv(block_in[i], w, 3, block_side[i]);
    dec.norm(w);
    dec.conv(w, w, 3, block_side[i]);
    dec.norm(w);
  }
  if (dc.adaptive_fusion) {
    dec.conv(2, 1, 1, S / 2);
    dec.conv(3 * w, w, 3, S / 2);
    dec.norm(w);
    dec.conv(w, w, 3, S / 2);
    dec.norm(w);
  }
  dec.conv(w, 1, 3, S / 2);
  for (int i = 0; i < 3; ++i) dec.conv(w, 1, 3, block_side[i]);
  r.breakdown.push_back(dec.item);

  for (const auto& i : r.breakdown) {
    r.params += i.params;
    r.macs += i.macs;
    r.attention_macs += i.attention_macs;
  }
  return r;
}

CostItem cmf_interactive_portion(const CostReport& report) {
  const auto& p = report.item("cmf_projection");
  const auto& i = report.item("cmf_interactive");
  return {"cmf_interactive_portion", p.params + i.params, p.macs + i.macs, p.attention_macs + i.attention_macs};
}

void print_cost(std::ostream& os, const CostReport& report) {
  os << "input " << report.input_size << "x" << report.input_size << "\n";
  os << std::left << std::setw(24) << "part" << std::right << std::setw(14) << "params" << std::setw(18) << "macs"
     << std::setw(18) << "attention_macs" << "\n";
  auto row = [&](const CostItem& i) {
    os << std::left << std::setw(24) << i.name << std::right << std::setw(14) << i.params << std::setw(18) << i.macs
       << std::setw(18) << i.attention_macs << "\n";
  };
  for (const auto& i : report.breakdown) row(i);
  row(cmf_interactive_portion(report));
  os << std::fixed << std::setprecision(4) << "total params " << report.params_m() << " M\n"
     << "total macs " << report.macs_g() << " G\n"
     << "attention products " << static_cast<double>(report.attention_macs) / 1e9 << " G\n";
}

}  // namespace siatrans
