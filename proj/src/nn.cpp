#include "siatrans/nn.hpp"

#include <cmath>

namespace siatrans {

double Rng::uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

double Rng::trunc_normal(double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    const double v = dist(engine_);
    if (std::fabs(v) <= 2.0 * stddev) return v;
  }
}

std::size_t Rng::index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

Tensor ParameterStore::add(const std::string& name, Tensor tensor, bool trainable) {
  if (find(name)) throw UsageError("parameter '" + name + "' registered twice");
  tensor.set_requires_grad(trainable);
  entries_.push_back({name, tensor, trainable});
  return tensor;
}

std::vector<Tensor> ParameterStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

const ParameterStore::Entry* ParameterStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Linear Linear::create(const Scope& scope, std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.trunc_normal(0.02);
  Linear l;
  l.weight = scope.add("weight", Tensor({in, out}, std::move(w)));
  if (with_bias) l.bias = scope.add("bias", Tensor::zeros({out}));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add_broadcast(y, bias) : y;
}

LayerNorm LayerNorm::create(const Scope& scope, std::size_t dim) {
  LayerNorm ln;
  ln.gain = scope.add("gain", Tensor::full({dim}, 1.0));
  ln.bias = scope.add("bias", Tensor::zeros({dim}));
  return ln;
}

Conv2d Conv2d::create(const Scope& scope, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng,
                      bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  std::vector<double> w(out * in * kernel * kernel);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  Conv2d c;
  c.weight = scope.add("weight", Tensor({out, in, kernel, kernel}, std::move(w)));
  if (with_bias) {
    std::vector<double> b(out);
    for (auto& v : b) v = rng.uniform(-bound, bound);
    c.bias = scope.add("bias", Tensor({out}, std::move(b)));
  }
  c.padding = kernel / 2;
  return c;
}

BatchNorm2d BatchNorm2d::create(const Scope& scope, std::size_t channels) {
  BatchNorm2d bn;
  bn.gain = scope.add("gain", Tensor::full({channels}, 1.0));
  bn.bias = scope.add("bias", Tensor::zeros({channels}));
  bn.stats.running_mean = scope.add("running_mean", Tensor::zeros({channels}), false);
  bn.stats.running_var = scope.add("running_var", Tensor::full({channels}, 1.0), false);
  return bn;
}

}  // namespace siatrans
