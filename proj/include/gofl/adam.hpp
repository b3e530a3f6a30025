#pragma once

#include <cstdint>
#include <vector>

#include "gofl/tensor.hpp"

namespace gofl {

/// Per-parameter Adam moments plus the shared step counter.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint32_t step = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  /// Zero moments sized to match `params`.
  static AdamState for_params(const std::vector<Tensor<T>>& params);
};

/// One bias-corrected Adam update of every tensor in `params`. Throws
/// DataError when a parameter has no gradient buffer and ShapeError when the
/// moments do not line up with the parameters.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr);

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step<float>(std::vector<Tensor<float>>&, AdamState<float>&, float);
extern template void adam_step<double>(std::vector<Tensor<double>>&, AdamState<double>&, double);

}  // namespace gofl
