#include "gofl/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <vector>

#if defined(__x86_64__) || defined(__i386__)
#define GOFL_X86 1
#include <immintrin.h>
#else
#define GOFL_X86 0
#endif

// This translation unit is built with the baseline instruction set. Only the
// functions tagged GOFL_AVX2_FN contain AVX2/FMA code, so nothing here leaks
// wide instructions into inline functions shared with other units.

namespace gofl::kernels::avx2 {

#if GOFL_X86

#define GOFL_AVX2_FN __attribute__((target("avx2,fma")))

namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 16;
constexpr std::size_t kMc = 96;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 2048;

struct PackBuffers {
  std::vector<float> a = std::vector<float>(kMc * kKc);
  std::vector<float> b = std::vector<float>(kKc * kNc);
};

PackBuffers& pack_buffers() {
  thread_local PackBuffers buffers;
  return buffers;
}

// Packs op(A)[i0:i0+mc, p0:p0+kc] into row panels of kMr, zero padded.
void pack_a(Trans ta, const float* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, float* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMr; ++r) {
        float value = 0.0f;
        if (r < rows) {
          const std::size_t i = i0 + ir + r;
          const std::size_t q = p0 + p;
          value = ta == Trans::no ? a[i * lda + q] : a[q * lda + i];
        }
        *out++ = value;
      }
    }
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into column panels of kNr, zero padded.
void pack_b(Trans tb, const float* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, float* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t cols = std::min(kNr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      const std::size_t q = p0 + p;
      if (tb == Trans::no && cols == kNr) {
        std::memcpy(out, b + q * ldb + j0 + jr, kNr * sizeof(float));
        out += kNr;
        continue;
      }
      for (std::size_t c = 0; c < kNr; ++c) {
        float value = 0.0f;
        if (c < cols) {
          const std::size_t j = j0 + jr + c;
          value = tb == Trans::no ? b[q * ldb + j] : b[j * ldb + q];
        }
        *out++ = value;
      }
    }
  }
}

GOFL_AVX2_FN void micro_kernel(std::size_t kc, const float* pa, const float* pb, float* c,
                               std::size_t ldc, std::size_t rows, std::size_t cols) {
  __m256 acc[kMr][2];
  for (std::size_t r = 0; r < kMr; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(pb);
    const __m256 b1 = _mm256_loadu_ps(pb + 8);
    for (std::size_t r = 0; r < kMr; ++r) {
      const __m256 a = _mm256_broadcast_ss(pa + r);
      acc[r][0] = _mm256_fmadd_ps(a, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(a, b1, acc[r][1]);
    }
    pa += kMr;
    pb += kNr;
  }
  if (rows == kMr && cols == kNr) {
    for (std::size_t r = 0; r < kMr; ++r) {
      float* crow = c + r * ldc;
      _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[r][0]));
      _mm256_storeu_ps(crow + 8, _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[r][1]));
    }
    return;
  }
  alignas(32) float tile[kMr][kNr];
  for (std::size_t r = 0; r < kMr; ++r) {
    _mm256_store_ps(tile[r], acc[r][0]);
    _mm256_store_ps(tile[r] + 8, acc[r][1]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r][j];
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  PackBuffers& buf = pack_buffers();
  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(tb, b, ldb, pc, kc, jc, nc, buf.b.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(ta, a, lda, ic, mc, pc, kc, buf.a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const float* pb = buf.b.data() + (jr / kNr) * kc * kNr;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const float* pa = buf.a.data() + (ir / kMr) * kc * kMr;
            micro_kernel(kc, pa, pb, c + (ic + ir) * ldc + jc + jr, ldc,
                         std::min(kMr, mc - ir), std::min(kNr, nc - jr));
          }
        }
      }
    }
  }
}

GOFL_AVX2_FN void leaky_relu_forward(std::span<const float> x, float slope, std::span<float> y) {
  const std::size_t n = x.size();
  const __m256 vslope = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x.data() + i);
    const __m256 keep = _mm256_cmp_ps(vx, zero, _CMP_GE_OQ);
    _mm256_storeu_ps(y.data() + i, _mm256_blendv_ps(_mm256_mul_ps(vslope, vx), vx, keep));
  }
  for (; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

GOFL_AVX2_FN void leaky_relu_backward(std::span<const float> x, std::span<const float> gy,
                                      float slope, std::span<float> gx) {
  const std::size_t n = x.size();
  const __m256 vslope = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x.data() + i);
    const __m256 vg = _mm256_loadu_ps(gy.data() + i);
    const __m256 keep = _mm256_cmp_ps(vx, zero, _CMP_GE_OQ);
    const __m256 t = _mm256_blendv_ps(_mm256_mul_ps(vslope, vg), vg, keep);
    _mm256_storeu_ps(gx.data() + i, _mm256_add_ps(_mm256_loadu_ps(gx.data() + i), t));
  }
  for (; i < n; ++i) gx[i] += x[i] >= 0.0f ? gy[i] : slope * gy[i];
}

// Same operation order as the scalar reference and no FMA contraction, so
// results are bit-identical to it.
GOFL_AVX2_FN void adam_update(std::span<float> param, std::span<const float> grad,
                              std::span<float> m, std::span<float> v,
                              const AdamCoefficients<float>& k) {
  const std::size_t n = param.size();
  const __m256 b1 = _mm256_set1_ps(k.beta1);
  const __m256 b2 = _mm256_set1_ps(k.beta2);
  const __m256 c1 = _mm256_set1_ps(k.one_minus_beta1);
  const __m256 c2 = _mm256_set1_ps(k.one_minus_beta2);
  const __m256 bias1 = _mm256_set1_ps(k.bias1);
  const __m256 bias2 = _mm256_set1_ps(k.bias2);
  const __m256 lr = _mm256_set1_ps(k.lr);
  const __m256 eps = _mm256_set1_ps(k.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad.data() + i);
    __m256 vm = _mm256_loadu_ps(m.data() + i);
    __m256 vv = _mm256_loadu_ps(v.data() + i);
    vm = _mm256_add_ps(_mm256_mul_ps(b1, vm), _mm256_mul_ps(c1, g));
    vv = _mm256_add_ps(_mm256_mul_ps(b2, vv), _mm256_mul_ps(c2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m.data() + i, vm);
    _mm256_storeu_ps(v.data() + i, vv);
    const __m256 mhat = _mm256_div_ps(vm, bias1);
    const __m256 vhat = _mm256_div_ps(vv, bias2);
    const __m256 step =
        _mm256_div_ps(_mm256_mul_ps(lr, mhat), _mm256_add_ps(_mm256_sqrt_ps(vhat), eps));
    _mm256_storeu_ps(param.data() + i, _mm256_sub_ps(_mm256_loadu_ps(param.data() + i), step));
  }
  scalar::adam_update<float>(param.subspan(i), grad.subspan(i), m.subspan(i), v.subspan(i), k);
}

#else  // !GOFL_X86

[[noreturn]] static void unavailable() {
  throw std::logic_error("AVX2 kernels are not available on this architecture");
}

void gemm(Trans, Trans, std::size_t, std::size_t, std::size_t, const float*, std::size_t,
          const float*, std::size_t, float*, std::size_t) {
  unavailable();
}
void leaky_relu_forward(std::span<const float>, float, std::span<float>) { unavailable(); }
void leaky_relu_backward(std::span<const float>, std::span<const float>, float,
                         std::span<float>) {
  unavailable();
}
void adam_update(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                 const AdamCoefficients<float>&) {
  unavailable();
}

#endif

}  // namespace gofl::kernels::avx2
