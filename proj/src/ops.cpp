#include "gofl/ops.hpp"

#include <memory>
#include <string>

#include "gofl/errors.hpp"
#include "gofl/kernels.hpp"

namespace gofl {

namespace {

using kernels::Trans;

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (!(a == b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.to_string() + " vs " +
                     b.to_string());
  }
}

template <typename T>
void require_defined(const char* op, const Tensor<T>& t) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

struct ConvGeometry {
  std::size_t n, ci, h, w, co, kh, kw, ho, wo, stride, pad;
  std::size_t rows() const { return ci * kh * kw; }
  std::size_t cols() const { return n * ho * wo; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t plane = g.ho * g.wo;
  const std::size_t cols = g.cols();
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t b = 0; b < g.n; ++b) {
          const T* src = x + (b * g.ci + c) * g.h * g.w;
          T* dst = row + b * plane;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              const bool inside = iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 &&
                                  ix < static_cast<long>(g.w);
              dst[oy * g.wo + ox] = inside ? src[iy * g.w + ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* gx) {
  const std::size_t plane = g.ho * g.wo;
  const std::size_t cols = g.cols();
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t b = 0; b < g.n; ++b) {
          T* dst = gx + (b * g.ci + c) * g.h * g.w;
          const T* src = row + b * plane;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              dst[iy * g.w + ix] += src[oy * g.wo + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  require_defined("conv2d", input);
  require_defined("conv2d", weight);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (ws.c() != xs.c()) {
    throw ShapeError("conv2d: weight " + ws.to_string() + " expects " + std::to_string(ws.c()) +
                     " input channels, input " + xs.to_string() + " has " +
                     std::to_string(xs.c()));
  }
  if (bias.defined() && !(bias.shape() == Shape(1, ws.n(), 1, 1))) {
    throw ShapeError("conv2d: bias " + bias.shape().to_string() + " does not match " +
                     std::to_string(ws.n()) + " output channels");
  }
  if (xs.h() + 2 * padding < ws.h() || xs.w() + 2 * padding < ws.w() || ws.h() == 0 ||
      ws.w() == 0) {
    throw ShapeError("conv2d: kernel " + ws.to_string() + " larger than padded input " +
                     xs.to_string());
  }
  ConvGeometry g{xs.n(), xs.c(), xs.h(), xs.w(), ws.n(), ws.h(), ws.w(),
                 (xs.h() + 2 * padding - ws.h()) / stride + 1,
                 (xs.w() + 2 * padding - ws.w()) / stride + 1, stride, padding};
  if (g.n == 0 || g.co == 0 || g.ci == 0) throw ShapeError("conv2d: zero-sized output");

  const std::size_t rows = g.rows();
  const std::size_t cols = g.cols();
  const std::size_t plane = g.ho * g.wo;
  auto col = std::make_shared<std::vector<T>>(rows * cols);
  im2col(g, input.values().data(), col->data());

  std::vector<T> mat(g.co * cols, T(0));
  if (bias.defined()) {
    for (std::size_t o = 0; o < g.co; ++o) {
      std::fill(mat.begin() + o * cols, mat.begin() + (o + 1) * cols, bias.values()[o]);
    }
  }
  kernels::gemm(Trans::no, Trans::no, g.co, cols, rows, weight.values().data(), rows,
                col->data(), cols, mat.data(), cols);

  std::vector<T> out(g.n * g.co * plane);
  for (std::size_t o = 0; o < g.co; ++o) {
    for (std::size_t b = 0; b < g.n; ++b) {
      std::copy_n(mat.begin() + o * cols + b * plane, plane,
                  out.begin() + (b * g.co + o) * plane);
    }
  }

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  if (!weight.requires_grad()) col.reset();
  return Tensor<T>::make_result(
      Shape(g.n, g.co, g.ho, g.wo), std::move(out), inputs, [g, col](detail::Node<T>& self) {
        const std::size_t rows = g.rows();
        const std::size_t cols = g.cols();
        const std::size_t plane = g.ho * g.wo;
        std::vector<T> dmat(g.co * cols);
        for (std::size_t o = 0; o < g.co; ++o) {
          for (std::size_t b = 0; b < g.n; ++b) {
            std::copy_n(self.grad.begin() + (b * g.co + o) * plane, plane,
                        dmat.begin() + o * cols + b * plane);
          }
        }
        auto& x = *self.parents[0];
        auto& w = *self.parents[1];
        if (auto* gw = grad_target(w)) {
          kernels::gemm(Trans::no, Trans::yes, g.co, rows, cols, dmat.data(), cols, col->data(),
                        cols, gw->data(), rows);
        }
        if (self.parents.size() > 2) {
          if (auto* gb = grad_target(*self.parents[2])) {
            for (std::size_t o = 0; o < g.co; ++o) {
              T acc = T(0);
              for (std::size_t l = 0; l < cols; ++l) acc += dmat[o * cols + l];
              (*gb)[o] += acc;
            }
          }
        }
        if (auto* gx = grad_target(x)) {
          std::vector<T> dcol(rows * cols, T(0));
          kernels::gemm(Trans::yes, Trans::no, rows, cols, g.co, w.value.data(), rows,
                        dmat.data(), cols, dcol.data(), cols);
          col2im_add(g, dcol.data(), gx->data());
        }
      });
}

namespace {

// Source taps of output index `o` along one axis of length `len` for 2x
// half-pixel bilinear upsampling.
struct Taps {
  std::size_t i0, i1;
  double w0, w1;
};

Taps upsample_taps(std::size_t o, std::size_t len) {
  const std::size_t i = o / 2;
  if (o % 2 == 0) {
    return {i == 0 ? 0 : i - 1, i, 0.25, 0.75};
  }
  return {i, i + 1 < len ? i + 1 : len - 1, 0.75, 0.25};
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& input) {
  require_defined("upsample_bilinear2x", input);
  const Shape& s = input.shape();
  if (s.h() == 0 || s.w() == 0) throw ShapeError("upsample_bilinear2x: empty input");
  const Shape os(s.n(), s.c(), 2 * s.h(), 2 * s.w());
  std::vector<T> out(os.numel());
  const auto x = input.values();
  for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
    const T* src = x.data() + p * s.h() * s.w();
    T* dst = out.data() + p * os.h() * os.w();
    for (std::size_t oy = 0; oy < os.h(); ++oy) {
      const Taps ty = upsample_taps(oy, s.h());
      for (std::size_t ox = 0; ox < os.w(); ++ox) {
        const Taps tx = upsample_taps(ox, s.w());
        const T top = T(tx.w0) * src[ty.i0 * s.w() + tx.i0] + T(tx.w1) * src[ty.i0 * s.w() + tx.i1];
        const T bot = T(tx.w0) * src[ty.i1 * s.w() + tx.i0] + T(tx.w1) * src[ty.i1 * s.w() + tx.i1];
        dst[oy * os.w() + ox] = T(ty.w0) * top + T(ty.w1) * bot;
      }
    }
  }
  return Tensor<T>::make_result(os, std::move(out), {input}, [s, os](detail::Node<T>& self) {
    auto* gx = grad_target(*self.parents[0]);
    if (!gx) return;
    for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
      T* dst = gx->data() + p * s.h() * s.w();
      const T* g = self.grad.data() + p * os.h() * os.w();
      for (std::size_t oy = 0; oy < os.h(); ++oy) {
        const Taps ty = upsample_taps(oy, s.h());
        for (std::size_t ox = 0; ox < os.w(); ++ox) {
          const Taps tx = upsample_taps(ox, s.w());
          const T go = g[oy * os.w() + ox];
          dst[ty.i0 * s.w() + tx.i0] += T(ty.w0 * tx.w0) * go;
          dst[ty.i0 * s.w() + tx.i1] += T(ty.w0 * tx.w1) * go;
          dst[ty.i1 * s.w() + tx.i0] += T(ty.w1 * tx.w0) * go;
          dst[ty.i1 * s.w() + tx.i1] += T(ty.w1 * tx.w1) * go;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& input) {
  require_defined("avg_pool2x", input);
  const Shape& s = input.shape();
  if (s.h() % 2 != 0 || s.w() % 2 != 0 || s.h() == 0 || s.w() == 0) {
    throw ShapeError("avg_pool2x: extents must be even and positive, got " + s.to_string());
  }
  const Shape os(s.n(), s.c(), s.h() / 2, s.w() / 2);
  std::vector<T> out(os.numel());
  const auto x = input.values();
  for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
    const T* src = x.data() + p * s.h() * s.w();
    T* dst = out.data() + p * os.h() * os.w();
    for (std::size_t oy = 0; oy < os.h(); ++oy) {
      for (std::size_t ox = 0; ox < os.w(); ++ox) {
        const T* a = src + 2 * oy * s.w() + 2 * ox;
        dst[oy * os.w() + ox] = (a[0] + a[1] + a[s.w()] + a[s.w() + 1]) * T(0.25);
      }
    }
  }
  return Tensor<T>::make_result(os, std::move(out), {input}, [s, os](detail::Node<T>& self) {
    auto* gx = grad_target(*self.parents[0]);
    if (!gx) return;
    for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
      T* dst = gx->data() + p * s.h() * s.w();
      const T* g = self.grad.data() + p * os.h() * os.w();
      for (std::size_t oy = 0; oy < os.h(); ++oy) {
        for (std::size_t ox = 0; ox < os.w(); ++ox) {
          const T q = g[oy * os.w() + ox] * T(0.25);
          T* a = dst + 2 * oy * s.w() + 2 * ox;
          a[0] += q;
          a[1] += q;
          a[s.w()] += q;
          a[s.w() + 1] += q;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
  require_defined("leaky_relu", input);
  if (!(slope >= T(0) && slope < T(1))) {
    throw std::invalid_argument("leaky_relu: slope must lie in [0, 1)");
  }
  std::vector<T> out(input.numel());
  kernels::leaky_relu_forward(input.values(), slope, std::span<T>(out));
  return Tensor<T>::make_result(input.shape(), std::move(out), {input},
                                [slope](detail::Node<T>& self) {
                                  auto& x = *self.parents[0];
                                  if (auto* gx = grad_target(x)) {
                                    kernels::leaky_relu_backward(
                                        std::span<const T>(x.value), std::span<const T>(self.grad),
                                        slope, std::span<T>(*gx));
                                  }
                                });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined("concat_channels", a);
  require_defined("concat_channels", b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n() != sb.n() || sa.h() != sb.h() || sa.w() != sb.w()) {
    throw ShapeError("concat_channels: non-channel extents differ " + sa.to_string() + " vs " +
                     sb.to_string());
  }
  const std::size_t plane = sa.h() * sa.w();
  const Shape os(sa.n(), sa.c() + sb.c(), sa.h(), sa.w());
  std::vector<T> out(os.numel());
  for (std::size_t n = 0; n < sa.n(); ++n) {
    std::copy_n(a.values().begin() + n * sa.c() * plane, sa.c() * plane,
                out.begin() + n * os.c() * plane);
    std::copy_n(b.values().begin() + n * sb.c() * plane, sb.c() * plane,
                out.begin() + (n * os.c() + sa.c()) * plane);
  }
  return Tensor<T>::make_result(os, std::move(out), {a, b}, [sa, sb, plane](detail::Node<T>& self) {
    const std::size_t oc = sa.c() + sb.c();
    if (auto* ga = grad_target(*self.parents[0])) {
      for (std::size_t n = 0; n < sa.n(); ++n) {
        const T* src = self.grad.data() + n * oc * plane;
        T* dst = ga->data() + n * sa.c() * plane;
        for (std::size_t i = 0; i < sa.c() * plane; ++i) dst[i] += src[i];
      }
    }
    if (auto* gb = grad_target(*self.parents[1])) {
      for (std::size_t n = 0; n < sb.n(); ++n) {
        const T* src = self.grad.data() + (n * oc + sa.c()) * plane;
        T* dst = gb->data() + n * sb.c() * plane;
        for (std::size_t i = 0; i < sb.c() * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined("add", a);
  require_defined("add", b);
  require_same_shape("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = grad_target(*self.parents[k])) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined("sub", a);
  require_defined("sub", b);
  require_same_shape("sub", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    if (auto* g = grad_target(*self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_target(*self.parents[1])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined("mul", a);
  require_defined("mul", b);
  require_same_shape("mul", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    if (auto* g = grad_target(na)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * nb.value[i];
    }
    if (auto* g = grad_target(nb)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * na.value[i];
    }
  });
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
  require_defined("scalar_mul", a);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [s](detail::Node<T>& self) {
    if (auto* g = grad_target(*self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  require_defined("sum", a);
  T acc = T(0);
  for (T v : a.values()) acc += v;
  return Tensor<T>::make_result(Shape(1, 1, 1, 1), {acc}, {a}, [](detail::Node<T>& self) {
    if (auto* g = grad_target(*self.parents[0])) {
      for (T& v : *g) v += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  require_defined("mean", a);
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  T acc = T(0);
  for (T v : a.values()) acc += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  return Tensor<T>::make_result(Shape(1, 1, 1, 1), {acc * inv}, {a}, [inv](detail::Node<T>& self) {
    if (auto* g = grad_target(*self.parents[0])) {
      const T q = self.grad[0] * inv;
      for (T& v : *g) v += q;
    }
  });
}

#define GOFL_INSTANTIATE(T)                                                                    \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                               std::size_t, std::size_t);                                      \
  template Tensor<T> upsample_bilinear2x<T>(const Tensor<T>&);                                 \
  template Tensor<T> avg_pool2x<T>(const Tensor<T>&);                                          \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scalar_mul<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);

GOFL_INSTANTIATE(float)
GOFL_INSTANTIATE(double)

#undef GOFL_INSTANTIATE

}  // namespace gofl
