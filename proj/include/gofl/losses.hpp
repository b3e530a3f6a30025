#pragma once

// Training objectives and the evaluation metric.

#include <array>
#include <cstddef>
#include <vector>

#include "gofl/flow_io.hpp"
#include "gofl/tensor.hpp"

namespace gofl {

inline constexpr std::size_t kPredictionScales = 5;

struct LossWeights {
  /// Per-expansion weights, coarsest (1/64) to finest (1/4).
  std::array<double, kPredictionScales> scale_weights{0.32, 0.08, 0.02, 0.01, 0.005};
  double lambda = 0.1;  // reconstruction weight
  double alpha = 0.25;  // Charbonnier exponent
  double epsilon = 1e-3;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

enum class LossMode { guided, finetune };

/// Smoothing added under the endpoint-error square root.
inline constexpr double kEpeSmoothing = 1e-12;

/// Mean over pixels (and batch) of sqrt((u - u')^2 + (v - v')^2 + 1e-12).
/// Both tensors are [N,2,H,W]; only `pred` receives gradients.
template <typename T>
Tensor<T> epe_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Single-frame form against a dense FlowField.
template <typename T>
Tensor<T> epe_loss(const Tensor<T>& pred, const FlowField& target);

/// Elementwise (x^2 + eps^2)^alpha.
template <typename T>
Tensor<T> charbonnier(const Tensor<T>& x, T alpha, T epsilon);

/// Mean Charbonnier penalty of I1 - inverse_warp(I2, flow) over pixels,
/// channels and batch.
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& i1, const Tensor<T>& i2, const Tensor<T>& flow,
                              const LossWeights& weights);

/// Inputs to the multi-scale objective. `preds` run coarsest to finest with
/// prediction k at 1/2^(6-k) of the image extents; `proxy` and the images
/// are full resolution [N,2,H,W] / [N,C,H,W].
template <typename T>
struct MultiscaleInputs {
  std::vector<Tensor<T>> preds;
  Tensor<T> proxy;
  Tensor<T> i1;
  Tensor<T> i2;
};

/// Individual terms of the multi-scale objective, coarsest first.
template <typename T>
struct MultiscaleTerms {
  std::vector<Tensor<T>> epe;
  std::vector<Tensor<T>> reconstruction;  // empty in guided mode
  Tensor<T> total;
};

/// guided:   sum_k w_k * EPE(pred_k, proxy_k)
/// finetune: sum_k w_k * (EPE(pred_k, proxy_k) + lambda * Reconst(I1_k, I2_k, pred_k))
/// proxy_k is the block-averaged proxy in own-scale pixel units and I1_k,
/// I2_k are 2x2 average-pooled image pyramids.
template <typename T>
MultiscaleTerms<T> multiscale_terms(const MultiscaleInputs<T>& in, const LossWeights& weights,
                                    LossMode mode);

template <typename T>
Tensor<T> multiscale_loss(const MultiscaleInputs<T>& in, const LossWeights& weights,
                          LossMode mode) {
  return multiscale_terms(in, weights, mode).total;
}

/// Block-mean downsampling of a [N,2,H,W] flow tensor by `factor` with values
/// divided by `factor`. Not differentiable.
template <typename T>
Tensor<T> downsample_flow_tensor(const Tensor<T>& flow, std::size_t factor);

/// Average endpoint error over all pixels, or over masked pixels when `gt`
/// carries a valid mask. Throws DataError when the mask selects nothing.
double epe_metric(const FlowField& pred, const FlowField& gt);

}  // namespace gofl
