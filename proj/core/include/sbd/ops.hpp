#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sbd/tensor.hpp"

// Differentiable operations. Every function records a node when grad mode is
// on and an input requires a gradient.
//
// Spatial operations accept rank-4 [N,C,H,W] or rank-5 [N,C,D,H,W] tensors.
// Kernels are [F,C,k...]; per-axis stride/padding lists have one entry per
// spatial axis.
namespace sbd::ops {

/// Cross-correlation with zero padding. `bias` may be undefined.
/// Output extent per axis: floor((in + 2*pad - k) / stride) + 1.
Tensor conv(const Tensor& input, const Tensor& weight, const Tensor& bias,
            std::span<const int> stride, std::span<const int> padding);

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

/// 2x2x2 stride-2 up-convolution. input [N,Cin,D,H,W], weight [Cin,Cout,2,2,2],
/// optional bias [Cout]; output [N,Cout,2D,2H,2W].
Tensor conv_transpose3d_2x(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct PoolResult {
  Tensor output;
  /// Flat input index of each output's maximum (first in scan order on ties).
  std::vector<std::int64_t> argmax;
};

PoolResult max_pool(const Tensor& input, std::span<const int> window, std::span<const int> stride);
Tensor max_pool2d(const Tensor& input, int window);
Tensor max_pool3d(const Tensor& input, int window);

/// max(0, x); the derivative at 0 is taken as 0.
Tensor relu(const Tensor& input);

/// Mean over non-ignored positions of -log softmax(logits)[label], softmax
/// taken along axis 1. `labels` holds one entry per (n, spatial...) position.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels,
                             std::optional<std::int32_t> ignore_label = std::nullopt);

/// Sum over elements of 0.5 d^2 (|d| < 1) or |d| - 0.5, d = pred - target.
Tensor smooth_l1(const Tensor& pred, const Tensor& target);

/// Concatenates along axis 1, `a` first.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, end) along axis 1.
Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t end);

Tensor sum(const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, float factor);
/// Rank-1 tensor of input.flat[indices[i]].
Tensor gather(const Tensor& input, std::span<const std::int64_t> indices);
Tensor reshape(const Tensor& input, Shape shape);

/// Softmax along axis 1 (no graph recorded).
std::vector<float> softmax_channels(const Tensor& logits);

}  // namespace sbd::ops
