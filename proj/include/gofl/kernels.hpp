#pragma once

// Data-parallel inner loops used by the tensor engine. Every kernel has a
// portable scalar reference; float kernels additionally have an AVX2/FMA
// variant chosen at run time. The double-precision path (gradient checks)
// always runs the scalar reference.

#include <cstddef>
#include <span>
#include <string_view>

namespace gofl::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
/// Best instruction set the running CPU supports.
Isa detected_isa();
/// ISA used by the dispatched entry points. Defaults to detected_isa(); the
/// environment variable GOFL_ISA=scalar|avx2 overrides it at first use.
Isa active_isa();
/// Throws std::invalid_argument when the CPU does not support `isa`.
void set_active_isa(Isa isa);

enum class Trans { no, yes };

/// Bias-corrected Adam coefficients for one step.
template <typename T>
struct AdamCoefficients {
  T lr;
  T beta1;
  T beta2;
  T one_minus_beta1;
  T one_minus_beta2;
  T eps;
  T bias1;  // 1 - beta1^t
  T bias2;  // 1 - beta2^t
};

// C += op(A) * op(B), all row-major. op(A) is m x k, op(B) is k x n.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc);
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc);

// y = x >= 0 ? x : slope * x
void leaky_relu_forward(std::span<const float> x, float slope, std::span<float> y);
void leaky_relu_forward(std::span<const double> x, double slope, std::span<double> y);
// gx += gy * (x >= 0 ? 1 : slope)
void leaky_relu_backward(std::span<const float> x, std::span<const float> gy, float slope,
                         std::span<float> gx);
void leaky_relu_backward(std::span<const double> x, std::span<const double> gy, double slope,
                         std::span<double> gx);

void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, const AdamCoefficients<float>& k);
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoefficients<double>& k);

namespace scalar {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc);
template <typename T>
void leaky_relu_forward(std::span<const T> x, T slope, std::span<T> y);
template <typename T>
void leaky_relu_backward(std::span<const T> x, std::span<const T> gy, T slope, std::span<T> gx);
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 const AdamCoefficients<T>& k);

}  // namespace scalar

// Only callable when isa_supported(Isa::avx2).
namespace avx2 {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc);
void leaky_relu_forward(std::span<const float> x, float slope, std::span<float> y);
void leaky_relu_backward(std::span<const float> x, std::span<const float> gy, float slope,
                         std::span<float> gx);
void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, const AdamCoefficients<float>& k);

}  // namespace avx2

}  // namespace gofl::kernels
