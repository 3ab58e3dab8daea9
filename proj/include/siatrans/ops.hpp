#pragma once

#include <span>
#include <vector>

#include "siatrans/tensor.hpp"

namespace siatrans {

// Every function here is differentiable with respect to its Tensor arguments
// (except where noted) and records onto the active Tape when one is present.
// Broadcasting is limited to leading extents; anything else needs an explicit
// reshape/expand.

/// Batched product of [..., m, k] and [..., k, n]. Either operand may be a
/// plain matrix, in which case it is shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x + b where b's shape equals a suffix of x's shape (bias, position table).
Tensor add_broadcast(const Tensor& x, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
/// Repeats an extent-1 axis `count` times.
Tensor expand(const Tensor& x, int axis, std::size_t count);

/// Scalar (shape {1}) reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reductions along one axis; the axis is kept with extent 1.
Tensor mean_axis(const Tensor& x, int axis);
/// Gradient flows to the first maximal element of each slice.
Tensor max_axis(const Tensor& x, int axis);

/// Max-subtracted softmax. Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x, int axis);

/// Normalizes over the last axis only; gain and bias have that extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

struct BatchNormStats {
  Tensor running_mean;  // (C)
  Tensor running_var;   // (C)
};

/// Per-channel normalization of (B,C,H,W). Training mode uses batch
/// statistics (biased variance) and updates `stats` in place with the
/// unbiased variance; eval mode uses `stats`. Training with B == 1 throws.
Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, BatchNormStats& stats,
                  bool training, double momentum = 0.1, double eps = 1e-5);

/// Cross-correlation of (B,Cin,H,W) with (Cout,Cin,k,k); `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Soft split of (B,C,H,W) into (B, L, k*k*C) patch tokens. Token order is
/// row-major over the output grid; within a token the layout is
/// (kernel row, kernel col, channel) with channel fastest.
Tensor unfold(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Bilinear upsampling of (B,C,H,W) with half-pixel centers
/// (align_corners = false). Downscaling throws UsageError.
Tensor upsample_bilinear(const Tensor& x, std::size_t height, std::size_t width);

/// Mean binary cross-entropy of predictions clamped to [eps, 1-eps] against
/// a constant target (the target receives no gradient).
Tensor binary_cross_entropy(const Tensor& prediction, const Tensor& target, double eps = 1e-7);

}  // namespace siatrans
