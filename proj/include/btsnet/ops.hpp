#pragma once

#include <span>

#include "btsnet/autograd.hpp"

/// Differentiable primitives. Every function records a backward closure when
/// gradient recording is on and an input requires gradients.
namespace btsnet::ops {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

/// Output extent of a convolution/pooling window along one axis.
int conv_out_extent(int in, int kernel, int stride, int padding, int dilation);

/// weight: (out, in, kh, kw); bias: (1, out, 1, 1) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              Conv2dOptions options);

/// Batch normalization over (batch, row, col) per channel. In training mode
/// batch statistics are used and the running estimates are updated in place;
/// otherwise the running estimates normalize.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var,
                  bool training, double momentum, double eps);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Elementwise sum with size-1 broadcasting on any axis.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Elementwise product with size-1 broadcasting on any axis.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, double factor);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

/// Spatial mean per (batch, channel); output (N, C, 1, 1).
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Softmax across the channel axis at every (batch, row, col).
template <typename T>
Var<T> softmax_channels(const Var<T>& x);

/// Bilinear resize with half-pixel centers (no corner alignment): destination
/// pixel i samples source coordinate (i + 0.5) * in / out - 0.5, clamped to
/// the border. Target extents must not be smaller than the source.
template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int target_h, int target_w);

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int kernel, int stride, int padding);

/// Mean binary cross-entropy of probabilities `s` against `target`, with `s`
/// clamped to [eps, 1 - eps]. Scalar (1,1,1,1) output.
template <typename T>
Var<T> bce_mean(const Var<T>& s, const Tensor<T>& target, double eps);

/// Sum of x * w over all elements, w constant. Scalar output.
template <typename T>
Var<T> inner(const Var<T>& x, const Tensor<T>& w);

}  // namespace btsnet::ops
