#include "gofl/warping.hpp"

#include <string>

#include "gofl/errors.hpp"
#include "gofl/ops.hpp"

namespace gofl {

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& img, const Tensor<T>& grid) {
  const Shape& is = img.shape();
  const Shape& gs = grid.shape();
  if (gs.c() != 2 || gs.n() != is.n()) {
    throw ShapeError("bilinear_sample: grid " + gs.to_string() + " does not fit image " +
                     is.to_string());
  }
  if (is.h() == 0 || is.w() == 0 || is.c() == 0) throw ShapeError("bilinear_sample: empty image");
  const Shape os(is.n(), is.c(), gs.h(), gs.w());
  const std::size_t in_plane = is.h() * is.w();
  const std::size_t out_plane = gs.h() * gs.w();
  std::vector<T> out(os.numel());
  const auto src = img.values();
  const auto coords = grid.values();
  for (std::size_t n = 0; n < is.n(); ++n) {
    const T* xs = coords.data() + n * 2 * out_plane;
    const T* ys = xs + out_plane;
    for (std::size_t c = 0; c < is.c(); ++c) {
      const T* plane = src.data() + (n * is.c() + c) * in_plane;
      T* dst = out.data() + (n * is.c() + c) * out_plane;
      for (std::size_t p = 0; p < out_plane; ++p) {
        dst[p] = sample_bilinear(plane, is.h(), is.w(), xs[p], ys[p]);
      }
    }
  }
  return Tensor<T>::make_result(
      os, std::move(out), {img, grid}, [is, gs](detail::Node<T>& self) {
        auto& img_node = *self.parents[0];
        auto& grid_node = *self.parents[1];
        auto* gimg = grad_target(img_node);
        auto* ggrid = grad_target(grid_node);
        const std::size_t in_plane = is.h() * is.w();
        const std::size_t out_plane = gs.h() * gs.w();
        for (std::size_t n = 0; n < is.n(); ++n) {
          const T* xs = grid_node.value.data() + n * 2 * out_plane;
          const T* ys = xs + out_plane;
          for (std::size_t c = 0; c < is.c(); ++c) {
            const T* plane = img_node.value.data() + (n * is.c() + c) * in_plane;
            const T* g = self.grad.data() + (n * is.c() + c) * out_plane;
            for (std::size_t p = 0; p < out_plane; ++p) {
              const T go = g[p];
              const AxisTaps<T> tx = axis_taps(xs[p], is.w());
              const AxisTaps<T> ty = axis_taps(ys[p], is.h());
              const std::size_t ia = ty.i0 * is.w() + tx.i0;
              const std::size_t ib = ty.i0 * is.w() + tx.i1;
              const std::size_t ic = ty.i1 * is.w() + tx.i0;
              const std::size_t id = ty.i1 * is.w() + tx.i1;
              if (gimg) {
                T* gi = gimg->data() + (n * is.c() + c) * in_plane;
                gi[ia] += go * (T(1) - tx.frac) * (T(1) - ty.frac);
                gi[ib] += go * tx.frac * (T(1) - ty.frac);
                gi[ic] += go * (T(1) - tx.frac) * ty.frac;
                gi[id] += go * tx.frac * ty.frac;
              }
              if (ggrid) {
                const T a = plane[ia], b = plane[ib], cc = plane[ic], d = plane[id];
                T* gx = ggrid->data() + n * 2 * out_plane;
                T* gy = gx + out_plane;
                gx[p] += go * ((T(1) - ty.frac) * (b - a) + ty.frac * (d - cc));
                gy[p] += go * (((T(1) - tx.frac) * cc + tx.frac * d) -
                               ((T(1) - tx.frac) * a + tx.frac * b));
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> identity_grid(std::size_t n, std::size_t height, std::size_t width) {
  const std::size_t plane = height * width;
  std::vector<T> values(n * 2 * plane);
  for (std::size_t b = 0; b < n; ++b) {
    T* xs = values.data() + b * 2 * plane;
    T* ys = xs + plane;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        xs[y * width + x] = static_cast<T>(x);
        ys[y * width + x] = static_cast<T>(y);
      }
    }
  }
  return Tensor<T>::from(Shape(n, 2, height, width), std::move(values));
}

template <typename T>
Tensor<T> inverse_warp(const Tensor<T>& i2, const Tensor<T>& flow) {
  const Shape& is = i2.shape();
  const Shape& fs = flow.shape();
  if (fs.n() != is.n() || fs.c() != 2 || fs.h() != is.h() || fs.w() != is.w()) {
    throw ShapeError("inverse_warp: flow " + fs.to_string() + " does not match image " +
                     is.to_string());
  }
  return bilinear_sample(i2, add(identity_grid<T>(is.n(), is.h(), is.w()), flow));
}

Image warp_image(const Image& i2, const FlowField& flow) {
  if (flow.height != i2.height || flow.width != i2.width) {
    throw ShapeError("warp_image: flow " + std::to_string(flow.height) + "x" +
                     std::to_string(flow.width) + " does not match image " +
                     std::to_string(i2.height) + "x" + std::to_string(i2.width));
  }
  Image out(i2.height, i2.width, i2.channels);
  for (std::size_t y = 0; y < i2.height; ++y) {
    for (std::size_t x = 0; x < i2.width; ++x) {
      const std::size_t p = y * i2.width + x;
      const float sx = static_cast<float>(x) + flow.u[p];
      const float sy = static_cast<float>(y) + flow.v[p];
      for (std::size_t c = 0; c < i2.channels; ++c) {
        out.data[p * i2.channels + c] =
            sample_bilinear(i2.data.data() + c, i2.height, i2.width, sx, sy, i2.channels);
      }
    }
  }
  return out;
}

template Tensor<float> bilinear_sample<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bilinear_sample<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> identity_grid<float>(std::size_t, std::size_t, std::size_t);
template Tensor<double> identity_grid<double>(std::size_t, std::size_t, std::size_t);
template Tensor<float> inverse_warp<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> inverse_warp<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace gofl
