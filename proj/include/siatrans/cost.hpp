#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "siatrans/model.hpp"

namespace siatrans {

/// MACs follow the usual profiler convention: linear and convolution layers
/// only. The activation-by-activation attention products (Q K^T and A V) are
/// reported separately in `attention_macs`; norms, activations and resampling
/// are not counted.
struct CostItem {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t attention_macs = 0;
};

struct CostReport {
  std::size_t input_size = 0;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t attention_macs = 0;
  std::vector<CostItem> breakdown;  // encoder, heads, cmf_projection, cmf_interactive, cmf_transformer, decoder

  const CostItem& item(const std::string& name) const;
  double params_m() const { return static_cast<double>(params) / 1e6; }
  double macs_g() const { return static_cast<double>(macs) / 1e9; }
};

/// Closed-form primitives.
std::uint64_t linear_params(std::uint64_t in, std::uint64_t out, bool bias = true);
std::uint64_t conv_params(std::uint64_t in, std::uint64_t out, std::uint64_t k, bool bias = true);
std::uint64_t conv_macs(std::uint64_t in, std::uint64_t out, std::uint64_t k, std::uint64_t h_out,
                        std::uint64_t w_out);

/// Structural cost of `config` evaluated at `input_size` (one RGB-D pair).
CostReport count_cost(ModelConfig config, std::size_t input_size);

/// Interactive-attention portion of the fusion module: the shared projection
/// plus the interactive layers.
CostItem cmf_interactive_portion(const CostReport& report);

void print_cost(std::ostream& os, const CostReport& report);

}  // namespace siatrans
