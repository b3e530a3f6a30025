#include "gofl/kernels.hpp"

#include <cmath>

namespace gofl::kernels::scalar {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  // Each c(i, j) accumulates its k products in ascending p order.
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ta == Trans::no ? a[i * lda + p] : a[p * lda + i];
      if (tb == Trans::no) {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * ldb + p];
      }
    }
  }
}

template <typename T>
void leaky_relu_forward(std::span<const T> x, T slope, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= T(0) ? x[i] : slope * x[i];
}

template <typename T>
void leaky_relu_backward(std::span<const T> x, std::span<const T> gy, T slope, std::span<T> gx) {
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] += x[i] >= T(0) ? gy[i] : slope * gy[i];
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 const AdamCoefficients<T>& k) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = k.beta1 * m[i] + k.one_minus_beta1 * g;
    v[i] = k.beta2 * v[i] + k.one_minus_beta2 * (g * g);
    const T mhat = m[i] / k.bias1;
    const T vhat = v[i] / k.bias2;
    param[i] = param[i] - k.lr * mhat / (std::sqrt(vhat) + k.eps);
  }
}

#define GOFL_INSTANTIATE(T)                                                                    \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, const T*,         \
                        std::size_t, const T*, std::size_t, T*, std::size_t);                  \
  template void leaky_relu_forward<T>(std::span<const T>, T, std::span<T>);                    \
  template void leaky_relu_backward<T>(std::span<const T>, std::span<const T>, T, std::span<T>); \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,   \
                               const AdamCoefficients<T>&);

GOFL_INSTANTIATE(float)
GOFL_INSTANTIATE(double)

#undef GOFL_INSTANTIATE

}  // namespace gofl::kernels::scalar
