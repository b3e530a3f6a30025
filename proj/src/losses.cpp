#include "gofl/losses.hpp"

#include <cmath>
#include <string>

#include "gofl/errors.hpp"
#include "gofl/ops.hpp"
#include "gofl/warping.hpp"

namespace gofl {

void LossWeights::validate() const {
  for (double w : scale_weights) {
    if (!(w >= 0.0)) throw ConfigError("scale weights must be non-negative");
  }
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

template <typename T>
Tensor<T> epe_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  const Shape& ps = pred.shape();
  if (!(ps == target.shape()) || ps.c() != 2) {
    throw ShapeError("epe_loss: prediction " + ps.to_string() + " vs target " +
                     target.shape().to_string());
  }
  const std::size_t plane = ps.h() * ps.w();
  const std::size_t count = ps.n() * plane;
  if (count == 0) throw ShapeError("epe_loss: empty flow");
  const auto p = pred.values();
  const auto t = target.values();
  // Per-pixel distances are kept for the backward pass.
  std::vector<T> dist(count);
  T acc = T(0);
  for (std::size_t n = 0; n < ps.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t iu = n * 2 * plane + i;
      const std::size_t iv = iu + plane;
      const T du = p[iu] - t[iu];
      const T dv = p[iv] - t[iv];
      const T d = std::sqrt(du * du + dv * dv + T(kEpeSmoothing));
      dist[n * plane + i] = d;
      acc += d;
    }
  }
  const T inv = T(1) / static_cast<T>(count);
  return Tensor<T>::make_result(
      Shape(1, 1, 1, 1), {acc * inv}, {pred, target},
      [ps, plane, inv, dist = std::move(dist)](detail::Node<T>& self) {
        auto& pn = *self.parents[0];
        auto& tn = *self.parents[1];
        auto* gp = grad_target(pn);
        auto* gt = grad_target(tn);
        const T scale = self.grad[0] * inv;
        for (std::size_t n = 0; n < ps.n(); ++n) {
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t iu = n * 2 * plane + i;
            const std::size_t iv = iu + plane;
            const T k = scale / dist[n * plane + i];
            const T gu = k * (pn.value[iu] - tn.value[iu]);
            const T gv = k * (pn.value[iv] - tn.value[iv]);
            if (gp) {
              (*gp)[iu] += gu;
              (*gp)[iv] += gv;
            }
            if (gt) {
              (*gt)[iu] -= gu;
              (*gt)[iv] -= gv;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> epe_loss(const Tensor<T>& pred, const FlowField& target) {
  if (target.has_mask()) throw ShapeError("epe_loss: training targets must be dense");
  const Shape& ps = pred.shape();
  if (ps.n() != 1 || ps.c() != 2 || ps.h() != target.height || ps.w() != target.width) {
    throw ShapeError("epe_loss: prediction " + ps.to_string() + " vs target " +
                     std::to_string(target.height) + "x" + std::to_string(target.width));
  }
  std::vector<T> values(ps.numel());
  const std::size_t plane = target.pixel_count();
  for (std::size_t i = 0; i < plane; ++i) {
    values[i] = static_cast<T>(target.u[i]);
    values[plane + i] = static_cast<T>(target.v[i]);
  }
  return epe_loss(pred, Tensor<T>::from(ps, std::move(values)));
}

template <typename T>
Tensor<T> charbonnier(const Tensor<T>& x, T alpha, T epsilon) {
  if (!(epsilon > T(0))) throw std::invalid_argument("charbonnier: epsilon must be positive");
  const T eps2 = epsilon * epsilon;
  std::vector<T> out(x.numel());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(v[i] * v[i] + eps2, alpha);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [alpha, eps2](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    if (auto* g = grad_target(xn)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T xv = xn.value[i];
        (*g)[i] += self.grad[i] * T(2) * alpha * xv * std::pow(xv * xv + eps2, alpha - T(1));
      }
    }
  });
}

template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& i1, const Tensor<T>& i2, const Tensor<T>& flow,
                              const LossWeights& weights) {
  if (!(i1.shape() == i2.shape())) {
    throw ShapeError("reconstruction_loss: image shapes differ " + i1.shape().to_string() +
                     " vs " + i2.shape().to_string());
  }
  const Tensor<T> warped = inverse_warp(i2, flow);
  return mean(charbonnier(sub(i1, warped), static_cast<T>(weights.alpha),
                          static_cast<T>(weights.epsilon)));
}

template <typename T>
Tensor<T> downsample_flow_tensor(const Tensor<T>& flow, std::size_t factor) {
  const Shape& s = flow.shape();
  if (factor == 0 || s.h() % factor != 0 || s.w() % factor != 0) {
    throw ShapeError("downsample_flow: extents " + s.to_string() + " not divisible by " +
                     std::to_string(factor));
  }
  const Shape os(s.n(), s.c(), s.h() / factor, s.w() / factor);
  std::vector<T> out(os.numel());
  const auto v = flow.values();
  const T norm = T(1) / static_cast<T>(factor * factor * factor);
  for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
    const T* src = v.data() + p * s.h() * s.w();
    T* dst = out.data() + p * os.h() * os.w();
    for (std::size_t oy = 0; oy < os.h(); ++oy) {
      for (std::size_t ox = 0; ox < os.w(); ++ox) {
        T acc = T(0);
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) {
            acc += src[(oy * factor + dy) * s.w() + ox * factor + dx];
          }
        }
        dst[oy * os.w() + ox] = acc * norm;
      }
    }
  }
  return Tensor<T>::from(os, std::move(out));
}

template <typename T>
MultiscaleTerms<T> multiscale_terms(const MultiscaleInputs<T>& in, const LossWeights& weights,
                                    LossMode mode) {
  if (in.preds.size() != kPredictionScales) {
    throw ShapeError("multiscale_loss: expected 5 predictions, got " +
                     std::to_string(in.preds.size()));
  }
  const Shape& full = in.proxy.shape();
  for (std::size_t k = 0; k < kPredictionScales; ++k) {
    const std::size_t factor = std::size_t{1} << (6 - k);
    const Shape expected(full.n(), 2, full.h() / factor, full.w() / factor);
    if (full.h() % factor != 0 || full.w() % factor != 0 || !(in.preds[k].shape() == expected)) {
      throw ShapeError("multiscale_loss: prediction " + std::to_string(k) + " has shape " +
                       in.preds[k].shape().to_string() + ", expected " + expected.to_string());
    }
  }

  MultiscaleTerms<T> terms;
  std::vector<Tensor<T>> pyr1, pyr2;  // indexed like preds
  if (mode == LossMode::finetune) {
    if (!(in.i1.shape() == in.i2.shape()) || in.i1.shape().n() != full.n() ||
        in.i1.shape().h() != full.h() || in.i1.shape().w() != full.w()) {
      throw ShapeError("multiscale_loss: images " + in.i1.shape().to_string() + " / " +
                       in.i2.shape().to_string() + " do not match proxy " + full.to_string());
    }
    Tensor<T> a = avg_pool2x(avg_pool2x(in.i1.detach()));
    Tensor<T> b = avg_pool2x(avg_pool2x(in.i2.detach()));
    pyr1.resize(kPredictionScales);
    pyr2.resize(kPredictionScales);
    for (std::size_t k = kPredictionScales; k-- > 0;) {
      pyr1[k] = a;
      pyr2[k] = b;
      if (k > 0) {
        a = avg_pool2x(a);
        b = avg_pool2x(b);
      }
    }
  }

  Tensor<T> total;
  for (std::size_t k = 0; k < kPredictionScales; ++k) {
    const std::size_t factor = std::size_t{1} << (6 - k);
    const Tensor<T> target = downsample_flow_tensor(in.proxy, factor);
    Tensor<T> epe = epe_loss(in.preds[k], target);
    terms.epe.push_back(epe);
    Tensor<T> term = epe;
    if (mode == LossMode::finetune) {
      Tensor<T> rec = reconstruction_loss(pyr1[k], pyr2[k], in.preds[k], weights);
      terms.reconstruction.push_back(rec);
      term = add(epe, scalar_mul(rec, static_cast<T>(weights.lambda)));
    }
    Tensor<T> weighted = scalar_mul(term, static_cast<T>(weights.scale_weights[k]));
    total = total.defined() ? add(total, weighted) : weighted;
  }
  terms.total = total;
  return terms;
}

double epe_metric(const FlowField& pred, const FlowField& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("epe_metric: extents differ");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!gt.is_valid(i)) continue;
    const double du = static_cast<double>(pred.u[i]) - gt.u[i];
    const double dv = static_cast<double>(pred.v[i]) - gt.v[i];
    acc += std::sqrt(du * du + dv * dv);
    ++count;
  }
  if (count == 0) throw DataError("epe_metric: valid mask selects no pixels");
  return acc / static_cast<double>(count);
}

#define GOFL_INSTANTIATE(T)                                                                    \
  template Tensor<T> epe_loss<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> epe_loss<T>(const Tensor<T>&, const FlowField&);                          \
  template Tensor<T> charbonnier<T>(const Tensor<T>&, T, T);                                   \
  template Tensor<T> reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&,                \
                                            const Tensor<T>&, const LossWeights&);             \
  template Tensor<T> downsample_flow_tensor<T>(const Tensor<T>&, std::size_t);                 \
  template MultiscaleTerms<T> multiscale_terms<T>(const MultiscaleInputs<T>&,                  \
                                                  const LossWeights&, LossMode);

GOFL_INSTANTIATE(float)
GOFL_INSTANTIATE(double)

#undef GOFL_INSTANTIATE

}  // namespace gofl
