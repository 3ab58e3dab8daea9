#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "siatrans/ops.hpp"
#include "siatrans/tensor.hpp"

namespace siatrans {

/// Seeded generator used for every random draw in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  /// Normal draw resampled until it lies within two standard deviations.
  double trunc_normal(double stddev);
  std::size_t index(std::size_t n);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Named, ordered collection of every tensor a model owns. Registration order
/// is the serialization order. Buffers (BN running statistics) are stored
/// alongside parameters but are not trainable.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  Tensor add(const std::string& name, Tensor tensor, bool trainable = true);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  const Entry* find(const std::string& name) const;
  /// Number of trainable scalars.
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

/// Scoped name prefix helper: `Scope(store, "encoder").sub("layer0")`.
class Scope {
 public:
  Scope(ParameterStore& store, std::string prefix) : store_(&store), prefix_(std::move(prefix)) {}
  Scope sub(const std::string& name) const { return Scope(*store_, join(name)); }
  Tensor add(const std::string& name, Tensor t, bool trainable = true) const {
    return store_->add(join(name), std::move(t), trainable);
  }
  ParameterStore& store() const { return *store_; }

 private:
  std::string join(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }
  ParameterStore* store_;
  std::string prefix_;
};

/// y = x W + b over the last axis. W is stored (in, out).
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when created without bias

  static Linear create(const Scope& scope, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.size(0); }
  std::size_t out_features() const { return weight.size(1); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  static LayerNorm create(const Scope& scope, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

struct Conv2d {
  Tensor weight;  // (out, in, k, k)
  Tensor bias;    // (out) or undefined
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// PyTorch-default uniform(+-1/sqrt(fan_in)) initialization.
  static Conv2d create(const Scope& scope, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng,
                       bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
};

struct BatchNorm2d {
  Tensor gain;
  Tensor bias;
  BatchNormStats stats;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm2d create(const Scope& scope, std::size_t channels);
  /// Updates the (shared) running statistics when `training` is set.
  Tensor operator()(const Tensor& x, bool training) const {
    auto shared = stats;
    return batch_norm(x, gain, bias, shared, training, momentum, eps);
  }
};

}  // namespace siatrans
