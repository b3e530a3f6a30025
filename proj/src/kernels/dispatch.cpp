#include "gofl/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gofl::kernels {

namespace {

constexpr int kUnset = -1;
std::atomic<int> g_active{kUnset};

Isa resolve_initial() {
  if (const char* env = std::getenv("GOFL_ISA")) {
    const std::string name(env);
    if (name == "scalar") return Isa::scalar;
    if (name == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return detected_isa();
}

bool use_avx2() { return active_isa() == Isa::avx2; }

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(__x86_64__) || defined(__i386__)
  static const bool avx2 = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return avx2;
#else
  return false;
#endif
}

Isa detected_isa() { return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

Isa active_isa() {
  int current = g_active.load(std::memory_order_acquire);
  if (current == kUnset) {
    int resolved = static_cast<int>(resolve_initial());
    g_active.compare_exchange_strong(current, resolved, std::memory_order_acq_rel);
    current = g_active.load(std::memory_order_acquire);
  }
  return static_cast<Isa>(current);
}

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("instruction set not supported: " + std::string(isa_name(isa)));
  }
  g_active.store(static_cast<int>(isa), std::memory_order_release);
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  if (use_avx2()) {
    avx2::gemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc);
  } else {
    scalar::gemm<float>(ta, tb, m, n, k, a, lda, b, ldb, c, ldc);
  }
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  scalar::gemm<double>(ta, tb, m, n, k, a, lda, b, ldb, c, ldc);
}

void leaky_relu_forward(std::span<const float> x, float slope, std::span<float> y) {
  if (use_avx2()) {
    avx2::leaky_relu_forward(x, slope, y);
  } else {
    scalar::leaky_relu_forward<float>(x, slope, y);
  }
}

void leaky_relu_forward(std::span<const double> x, double slope, std::span<double> y) {
  scalar::leaky_relu_forward<double>(x, slope, y);
}

void leaky_relu_backward(std::span<const float> x, std::span<const float> gy, float slope,
                         std::span<float> gx) {
  if (use_avx2()) {
    avx2::leaky_relu_backward(x, gy, slope, gx);
  } else {
    scalar::leaky_relu_backward<float>(x, gy, slope, gx);
  }
}

void leaky_relu_backward(std::span<const double> x, std::span<const double> gy, double slope,
                         std::span<double> gx) {
  scalar::leaky_relu_backward<double>(x, gy, slope, gx);
}

void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, const AdamCoefficients<float>& k) {
  if (use_avx2()) {
    avx2::adam_update(param, grad, m, v, k);
  } else {
    scalar::adam_update<float>(param, grad, m, v, k);
  }
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoefficients<double>& k) {
  scalar::adam_update<double>(param, grad, m, v, k);
}

}  // namespace gofl::kernels
