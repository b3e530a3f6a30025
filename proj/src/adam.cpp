#include "gofl/adam.hpp"

#include <cmath>
#include <string>

#include "gofl/errors.hpp"
#include "gofl/kernels.hpp"

namespace gofl {

template <typename T>
AdamState<T> AdamState<T>::for_params(const std::vector<Tensor<T>>& params) {
  AdamState state;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), T(0));
    state.second_moment.emplace_back(p.numel(), T(0));
  }
  return state;
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but state for " +
                     std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw DataError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.first_moment[i].size() != params[i].numel() ||
        state.second_moment[i].size() != params[i].numel()) {
      throw ShapeError("adam_step: moment length mismatch for parameter " + std::to_string(i));
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  kernels::AdamCoefficients<T> k{lr,
                                 state.beta1,
                                 state.beta2,
                                 T(1) - state.beta1,
                                 T(1) - state.beta2,
                                 state.eps,
                                 static_cast<T>(1.0 - std::pow(static_cast<double>(state.beta1), t)),
                                 static_cast<T>(1.0 - std::pow(static_cast<double>(state.beta2), t))};
  for (std::size_t i = 0; i < params.size(); ++i) {
    kernels::adam_update(params[i].mutable_values(), params[i].grad(),
                         std::span<T>(state.first_moment[i]), std::span<T>(state.second_moment[i]),
                         k);
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<Tensor<float>>&, AdamState<float>&, float);
template void adam_step<double>(std::vector<Tensor<double>>&, AdamState<double>&, double);

}  // namespace gofl
