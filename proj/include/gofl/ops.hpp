#pragma once

// Differentiable operations of the flow network. Shapes are never broadcast;
// every mismatch raises ShapeError.

#include <cstddef>

#include "gofl/tensor.hpp"

namespace gofl {

/// Network-wide negative slope of leaky_relu.
inline constexpr double kLeakySlope = 0.1;

/// Cross-correlation of input [N,Ci,H,W] with weight [Co,Ci,K,K]. `bias` is
/// either undefined or shaped [1,Co,1,1]. Output extents are
/// floor((H + 2*padding - K) / stride) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

/// 2x bilinear upsampling, half-pixel (align-corners-false) sampling with
/// edge clamping.
template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& input);

/// Mean over non-overlapping 2x2 blocks. Height and width must be even.
template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& input);

/// slope must lie in [0, 1). Subgradient at 0 is 1.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s);

/// Sum of all elements as a [1,1,1,1] tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

/// Mean of all elements as a [1,1,1,1] tensor.
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

}  // namespace gofl
