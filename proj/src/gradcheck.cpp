#include "siatrans/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "siatrans/attention.hpp"
#include "siatrans/dataset.hpp"
#include "siatrans/decoder.hpp"
#include "siatrans/ops.hpp"

namespace siatrans {

namespace {

Tensor random(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

/// Random values kept at least `gap` away from zero, for ops with a kink there.
Tensor off_zero(const Shape& shape, Rng& rng, double gap = 0.05) {
  auto t = random(shape, rng);
  for (auto& v : t.mutable_data()) {
    if (std::fabs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

}  // namespace

GradReport gradcheck(const Fn& fn, std::vector<Tensor> inputs, std::size_t probes_per_input, double h, double floor,
                     std::uint64_t seed) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape tape;
  Tensor weights, out;
  {
    TapeScope scope(tape);
    const Tensor y = fn(inputs);
    if (y.numel() == 1) {
      weights = Tensor::full(y.shape(), 1.0);
    } else {
      Rng wr(99);
      weights = random(y.shape(), wr, 0.5, 1.5);
    }
    out = sum(mul(y, weights));
  }
  tape.backward(out);
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0));
  }
  Rng rng(seed);
  GradReport report;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k];
    const std::size_t n = t.numel();
    std::vector<std::size_t> idx;
    if (probes_per_input == 0 || probes_per_input >= n) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (std::size_t i = 0; i < probes_per_input; ++i) idx.push_back(rng.index(n));
    }
    for (auto i : idx) {
      auto d = t.mutable_data();
      const double orig = d[i];
      d[i] = orig + h;
      const Tensor yp = fn(inputs);
      d[i] = orig - h;
      const Tensor ym = fn(inputs);
      d[i] = orig;
      long double acc = 0.0L;
      for (std::size_t j = 0; j < yp.numel(); ++j) {
        acc += static_cast<long double>(weights.data()[j]) *
               (static_cast<long double>(yp.data()[j]) - static_cast<long double>(ym.data()[j]));
      }
      const double numeric = static_cast<double>(acc / (2.0L * h));
      const double a = analytic[k][i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.probes;
    }
  }
  return report;
}

std::vector<GradCase> op_gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto run = [&](const std::string& name, const Fn& fn, std::vector<Tensor> inputs, std::size_t probes = 0,
                 double h = 1e-5) {
    cases.push_back({name, gradcheck(fn, std::move(inputs), probes, h), kOpGradTolerance});
  };

  run("matmul", [](const auto& in) { return matmul(in[0], in[1]); }, {random({3, 4}, rng), random({4, 5}, rng)});
  run("matmul_batched", [](const auto& in) { return matmul(in[0], in[1]); },
      {random({2, 3, 4}, rng), random({2, 4, 2}, rng)});
  run("add", [](const auto& in) { return add(in[0], in[1]); }, {random({2, 3}, rng), random({2, 3}, rng)});
  run("sub", [](const auto& in) { return sub(in[0], in[1]); }, {random({2, 3}, rng), random({2, 3}, rng)});
  run("mul", [](const auto& in) { return mul(in[0], in[1]); }, {random({2, 3}, rng), random({2, 3}, rng)});
  run("add_broadcast", [](const auto& in) { return add_broadcast(in[0], in[1]); },
      {random({2, 3, 4}, rng), random({4}, rng)});
  run("scale", [](const auto& in) { return scale(in[0], -1.7); }, {random({5}, rng)});
  run("relu", [](const auto& in) { return relu(in[0]); }, {off_zero({3, 4}, rng)});
  run("gelu", [](const auto& in) { return gelu(in[0]); }, {random({3, 4}, rng, -3, 3)});
  run("sigmoid", [](const auto& in) { return sigmoid(in[0]); }, {random({3, 4}, rng, -4, 4)});
  run("abs", [](const auto& in) { return abs(in[0]); }, {off_zero({3, 4}, rng)});
  run("reshape", [](const auto& in) { return reshape(in[0], {4, 3}); }, {random({2, 6}, rng)});
  run("permute", [](const auto& in) { return permute(in[0], {2, 0, 1}); }, {random({2, 3, 4}, rng)});
  run("transpose", [](const auto& in) { return transpose(in[0], 0, 2); }, {random({2, 3, 4}, rng)});
  run("concat", [](const auto& in) { return concat({in[0], in[1]}, 1); },
      {random({2, 2, 3}, rng), random({2, 4, 3}, rng)});
  run("slice", [](const auto& in) { return slice(in[0], 1, 1, 2); }, {random({2, 4, 3}, rng)});
  run("expand", [](const auto& in) { return expand(in[0], 1, 3); }, {random({2, 1, 3}, rng)});
  run("sum", [](const auto& in) { return sum(in[0]); }, {random({2, 3}, rng)});
  run("mean", [](const auto& in) { return mean(in[0]); }, {random({2, 3}, rng)});
  run("mean_axis", [](const auto& in) { return mean_axis(in[0], 1); }, {random({2, 3, 4}, rng)});
  run("max_axis", [](const auto& in) { return max_axis(in[0], 1); }, {random({2, 3, 4}, rng)});
  run("softmax", [](const auto& in) { return softmax(in[0], -1); }, {random({2, 3, 5}, rng, -2, 2)});
  run("layer_norm", [](const auto& in) { return layer_norm(in[0], in[1], in[2]); },
      {random({2, 3, 6}, rng), random({6}, rng, 0.5, 1.5), random({6}, rng)});
  {
    BatchNormStats stats{random({3}, rng), random({3}, rng, 0.5, 1.5)};
    run("batch_norm_train", [&](const auto& in) { return batch_norm(in[0], in[1], in[2], stats, true); },
        {random({3, 3, 2, 2}, rng), random({3}, rng, 0.5, 1.5), random({3}, rng)});
    run("batch_norm_eval", [&](const auto& in) { return batch_norm(in[0], in[1], in[2], stats, false); },
        {random({2, 3, 2, 2}, rng), random({3}, rng, 0.5, 1.5), random({3}, rng)});
  }
  run("conv2d", [](const auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
      {random({2, 3, 5, 5}, rng), random({4, 3, 3, 3}, rng), random({4}, rng)});
  run("conv2d_strided", [](const auto& in) { return conv2d(in[0], in[1], Tensor(), 2, 1); },
      {random({1, 2, 6, 6}, rng), random({3, 2, 3, 3}, rng)});
  run("unfold", [](const auto& in) { return unfold(in[0], 3, 2, 1); }, {random({2, 2, 5, 5}, rng)});
  run("upsample_bilinear", [](const auto& in) { return upsample_bilinear(in[0], 7, 8); },
      {random({1, 2, 3, 4}, rng)});
  {
    const auto target = random({2, 5}, rng, 0, 1);
    run("binary_cross_entropy", [target](const auto& in) { return binary_cross_entropy(in[0], target); },
        {random({2, 5}, rng, 0.1, 0.9)});
    run("cross_entropy", [target](const auto& in) { return cross_entropy(in[0], target); },
        {random({2, 5}, rng, 0.1, 0.9)});
  }
  run("scaled_dot_attention", [](const auto& in) { return scaled_dot_attention(in[0], in[1], in[2]); },
      {random({2, 2, 3, 4}, rng), random({2, 2, 5, 4}, rng), random({2, 2, 5, 4}, rng)});

  ParameterStore store;
  Rng init(seed + 1);
  const AttentionConfig attn{8, 2, 16, 0.0, false};
  auto params_of = [&](const std::string& prefix) {
    std::vector<Tensor> out;
    for (const auto& e : store.entries()) {
      if (e.trainable && e.name.rfind(prefix, 0) == 0) out.push_back(e.tensor);
    }
    return out;
  };
  auto with_params = [&](std::vector<Tensor> inputs, const std::string& prefix) {
    for (auto& p : params_of(prefix)) inputs.push_back(p);
    return inputs;
  };

  const auto linear = Linear::create(Scope(store, "linear"), 4, 3, init);
  run("linear", [&](const auto& in) { return linear(in[0]); }, with_params({random({2, 5, 4}, rng)}, "linear."));

  const auto mha = MultiHeadAttention::create(Scope(store, "mha"), attn, init);
  run("multi_head_attention", [&](const auto& in) { return mha(in[0], in[1]); },
      with_params({random({1, 4, 8}, rng), random({1, 3, 8}, rng)}, "mha."), 6, 1e-4);

  const auto layer = TransformerLayer::create(Scope(store, "layer"), attn, init);
  run("transformer_layer", [&](const auto& in) { return layer(in[0]); },
      with_params({random({1, 4, 8}, rng)}, "layer."), 6, 1e-4);

  const auto inter = InteractiveAttention::create(Scope(store, "inter"), attn, init);
  run("interactive_attention",
      [&](const auto& in) {
        const auto [a, b] = inter(in[0], in[1]);
        return concat({a, b}, 1);
      },
      with_params({random({1, 4, 8}, rng), random({1, 4, 8}, rng)}, "inter."), 6, 1e-4);

  const auto spatial = Conv2d::create(Scope(store, "spatial"), 2, 1, 1, init);
  run("spatial_attention", [&](const auto& in) { return spatial_attention(in[0], spatial); },
      with_params({random({1, 3, 4, 4}, rng)}, "spatial."));
  return cases;
}

GradCase end_to_end_gradcheck(const ModelConfig& config, std::size_t probes, std::uint64_t seed) {
  SiaTrans model(config);
  const std::size_t S = config.encoder.image_size;
  const auto toy = make_toy_pairs(2, S, seed + 100);
  std::vector<PreparedPair> pairs;
  for (const auto& p : toy.pairs) pairs.push_back(preprocess_images(p.rgb, p.depth, p.gt, S));
  const auto batch = make_batch({&pairs[0], &pairs[1]}, nullptr);
  const Tensor labels({2}, {1.0, 0.0});

  static const char* const kSpread[] = {"encoder.t2t1.query.weight", "encoder.block1.attn.value.weight",
                                        "cmf.interactive0.attn.value.weight", "decoder.block2.conv1.weight",
                                        "decoder.final_head.weight",        "encoder.project.weight",
                                        "cmf.layer0.ffn.fc1.weight",        "decoder.fusion.theta_conv.weight"};
  std::vector<Tensor> inputs;
  for (const char* name : kSpread) {
    if (inputs.size() == probes) break;
    if (const auto* e = model.parameters().find(name)) inputs.push_back(e->tensor);
  }
  const auto fn = [&](const std::vector<Tensor>&) {
    const auto out = model.forward(batch.rgb, batch.depth3, {true, GatePolicy::Cross});
    std::vector<Tensor> parts;
    for (const auto& m : out.maps) parts.push_back(reshape(m, {m.numel()}));
    parts.push_back(out.class_logits);
    parts.push_back(reshape(total_loss(out.maps, batch.gt, out.class_logits, labels, unit_loss_weights()).objective, {1}));
    return concat(parts, 0);
  };
  return {"end_to_end", gradcheck(fn, inputs, 1, 1e-6, 1e-6, seed), kEndToEndGradTolerance};
}

}  // namespace siatrans
