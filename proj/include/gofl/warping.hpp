#pragma once

// Differentiable bilinear sampling and inverse warping.
//
// Neighbor indices are clamped to the image (clamp-to-edge), so any finite
// coordinate is valid. At exact integer coordinates the coordinate gradient
// is the right-sided difference.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "gofl/flow_io.hpp"
#include "gofl/tensor.hpp"

namespace gofl {

/// Bilinear taps for one continuous coordinate on an axis of length `len`.
template <typename T>
struct AxisTaps {
  std::size_t i0;
  std::size_t i1;
  T frac;
};

template <typename T>
AxisTaps<T> axis_taps(T coord, std::size_t len) {
  // Coordinates far outside behave exactly like the nearest out-of-range
  // ones (both taps clamp to the edge), so limit them before flooring.
  const T c = std::clamp(coord, T(-2), static_cast<T>(len) + T(1));
  const T fl = std::floor(c);
  const long base = static_cast<long>(fl);
  const long last = static_cast<long>(len) - 1;
  return {static_cast<std::size_t>(std::clamp(base, 0L, last)),
          static_cast<std::size_t>(std::clamp(base + 1, 0L, last)), c - fl};
}

/// Bilinear interpolation of a single row-major plane at (x, y) with `stride`
/// elements between consecutive pixels.
template <typename T, typename P>
T sample_bilinear(const P* plane, std::size_t height, std::size_t width, T x, T y,
                  std::size_t stride = 1) {
  const AxisTaps<T> tx = axis_taps(x, width);
  const AxisTaps<T> ty = axis_taps(y, height);
  const T a = static_cast<T>(plane[(ty.i0 * width + tx.i0) * stride]);
  const T b = static_cast<T>(plane[(ty.i0 * width + tx.i1) * stride]);
  const T c = static_cast<T>(plane[(ty.i1 * width + tx.i0) * stride]);
  const T d = static_cast<T>(plane[(ty.i1 * width + tx.i1) * stride]);
  const T top = (T(1) - tx.frac) * a + tx.frac * b;
  const T bottom = (T(1) - tx.frac) * c + tx.frac * d;
  return (T(1) - ty.frac) * top + ty.frac * bottom;
}

/// Samples img [N,C,H,W] at grid [N,2,Hg,Wg] (channel 0 holds x, channel 1
/// holds y, in source pixels). Returns [N,C,Hg,Wg]. Differentiable with
/// respect to both the image and the grid.
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& img, const Tensor<T>& grid);

/// [N,2,H,W] grid of pixel-center coordinates (x in channel 0, y in 1).
template <typename T>
Tensor<T> identity_grid(std::size_t n, std::size_t height, std::size_t width);

/// I1'(x, y) = I2(x + u, y + v). `flow` is [N,2,H,W] matching I2's extents.
template <typename T>
Tensor<T> inverse_warp(const Tensor<T>& i2, const Tensor<T>& flow);

/// Non-differentiable inverse warp for images and flow fields.
Image warp_image(const Image& i2, const FlowField& flow);

}  // namespace gofl
