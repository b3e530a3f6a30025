#include "gofl/gradient_suite.hpp"

#include <algorithm>
#include <cmath>

#include "gofl/losses.hpp"
#include "gofl/model.hpp"
#include "gofl/ops.hpp"
#include "gofl/random.hpp"
#include "gofl/warping.hpp"

namespace gofl {

namespace {

using T = Tensor<double>;

// The network check probes with a small step and keeps every leaky_relu
// input at least this far from its kink.
constexpr double kNetworkStep = 1e-6;
constexpr double kSmoothMargin = 2e-5;

T random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return T::from(shape, std::move(v));
}

// Values whose magnitude stays at least `gap` away from zero.
T away_from_zero(Rng& rng, Shape shape, double gap, double hi) {
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(gap, hi);
  return T::from(shape, std::move(v));
}

// Displacements with fractional parts kept away from the bilinear seams.
T off_lattice_flow(Rng& rng, Shape shape, double max_abs) {
  std::vector<double> v(shape.numel());
  for (auto& x : v) {
    const double whole = std::floor(rng.uniform(-max_abs, max_abs));
    x = whole + rng.uniform(0.1, 0.9);
  }
  return T::from(shape, std::move(v));
}

double smallest_preactivation(const ModelParams<double>& params, const T& i1, const T& i2) {
  std::vector<T> z;
  forward(params, i1, i2, &z);
  double m = INFINITY;
  for (const T& t : z) {
    for (double v : t.values()) m = std::min(m, std::abs(v));
  }
  return m;
}

}  // namespace

std::vector<GradcheckReport> run_gradient_suite(const GradientSuiteOptions& options) {
  Rng rng(options.seed);
  std::vector<GradcheckReport> reports;
  GradcheckOptions go;
  go.points = options.points;
  go.tolerance = options.tolerance;
  auto check = [&](const char* name, const std::function<T(const T&)>& fn, const T& at) {
    go.seed = derive_seed(options.seed, reports.size());
    reports.push_back(gradcheck(fn, at, go, name));
  };
  // Weighted sums make every output element matter with a distinct weight.
  auto weighted = [](const T& out, const T& w) { return sum(mul(out, w)); };

  {
    const T x = random_tensor(rng, Shape(2, 3, 7, 6), -1, 1);
    const T w = random_tensor(rng, Shape(4, 3, 3, 3), -0.5, 0.5);
    const T b = random_tensor(rng, Shape(1, 4, 1, 1), -0.5, 0.5);
    const T r1 = random_tensor(rng, Shape(2, 4, 7, 6), -1, 1);
    const T r2 = random_tensor(rng, Shape(2, 4, 4, 3), -1, 1);
    check("conv2d/input", [&](const T& t) { return weighted(conv2d(t, w, b, 1, 1), r1); }, x);
    check("conv2d/weight", [&](const T& t) { return weighted(conv2d(x, t, b, 1, 1), r1); }, w);
    const T wb = random_tensor(rng, Shape(12, 3, 3, 3), -0.5, 0.5);
    const T bb = random_tensor(rng, Shape(1, 12, 1, 1), -0.5, 0.5);
    const T rb = random_tensor(rng, Shape(2, 12, 7, 6), -1, 1);
    check("conv2d/bias", [&](const T& t) { return weighted(conv2d(x, wb, t, 1, 1), rb); }, bb);
    check("conv2d/stride2-input", [&](const T& t) { return weighted(conv2d(t, w, b, 2, 1), r2); }, x);
    check("conv2d/stride2-weight", [&](const T& t) { return weighted(conv2d(x, t, b, 2, 1), r2); }, w);
  }
  {
    const T x = random_tensor(rng, Shape(2, 2, 3, 5), -1, 1);
    const T r = random_tensor(rng, Shape(2, 2, 6, 10), -1, 1);
    check("upsample_bilinear2x", [&](const T& t) { return weighted(upsample_bilinear2x(t), r); }, x);
  }
  {
    const T x = random_tensor(rng, Shape(2, 2, 6, 4), -1, 1);
    const T r = random_tensor(rng, Shape(2, 2, 3, 2), -1, 1);
    check("avg_pool2x", [&](const T& t) { return weighted(avg_pool2x(t), r); }, x);
  }
  {
    const T x = away_from_zero(rng, Shape(1, 3, 4, 4), 0.05, 1.0);
    const T r = random_tensor(rng, Shape(1, 3, 4, 4), -1, 1);
    check("leaky_relu", [&](const T& t) { return weighted(leaky_relu(t, kLeakySlope), r); }, x);
  }
  {
    const T x = random_tensor(rng, Shape(1, 2, 4, 4), -0.2, 0.2);
    const T r = random_tensor(rng, Shape(1, 2, 4, 4), -1, 1);
    check("charbonnier", [&](const T& t) { return weighted(charbonnier(t, 0.25, 1e-3), r); }, x);
  }
  {
    const T a = random_tensor(rng, Shape(1, 3, 3, 4), -1, 1);
    const T b = random_tensor(rng, Shape(1, 2, 3, 4), -1, 1);
    const T r = random_tensor(rng, Shape(1, 5, 3, 4), -1, 1);
    check("concat_channels", [&](const T& t) { return weighted(concat_channels(t, b), r); }, a);
    const T c = random_tensor(rng, Shape(1, 3, 3, 4), -1, 1);
    check("add-sub-mul", [&](const T& t) { return mean(mul(sub(add(t, c), scalar_mul(c, 0.5)), t)); }, a);
  }
  {
    const T pred = random_tensor(rng, Shape(2, 2, 5, 4), -2, 2);
    const T target = random_tensor(rng, Shape(2, 2, 5, 4), -2, 2);
    check("epe_loss", [&](const T& t) { return epe_loss(t, target); }, pred);
  }
  {
    const T img = random_tensor(rng, Shape(2, 1, 6, 7), 0, 1);
    const T i1 = random_tensor(rng, Shape(2, 1, 6, 7), 0, 1);
    const T flow = off_lattice_flow(rng, Shape(2, 2, 6, 7), 1.5);
    const T r = random_tensor(rng, Shape(2, 1, 6, 7), -1, 1);
    check("inverse_warp/flow", [&](const T& t) { return weighted(inverse_warp(img, t), r); }, flow);
    check("inverse_warp/image", [&](const T& t) { return weighted(inverse_warp(t, flow), r); }, img);
    const T grid = add(identity_grid<double>(2, 6, 7), flow);
    check("bilinear_sample/grid", [&](const T& t) { return weighted(bilinear_sample(img, t), r); }, grid);

    const LossWeights lw;
    check("reconstruction_loss/flow",
          [&](const T& t) { return reconstruction_loss(i1, img, t, lw); }, flow);
    check("reconstruction_loss/i1",
          [&](const T& t) { return reconstruction_loss(t, img, flow, lw); }, i1);
    check("reconstruction_loss/i2",
          [&](const T& t) { return reconstruction_loss(i1, t, flow, lw); }, img);
  }
  {
    // Central differences are only meaningful where the network is smooth:
    // draw frames until no leaky_relu input lies within reach of a probe.
    ModelConfig cfg;
    cfg.base_channels = 4;
    const ModelParams<double> base = init_model<double>(cfg, options.seed);
    T i1, i2;
    for (int attempt = 0;; ++attempt) {
      i1 = random_tensor(rng, Shape(1, 1, 64, 64), 0, 1);
      i2 = random_tensor(rng, Shape(1, 1, 64, 64), 0, 1);
      if (smallest_preactivation(base, i1, i2) > kSmoothMargin || attempt == 200) break;
    }
    const T proxy = random_tensor(rng, Shape(1, 2, 64, 64), -4, 4);
    const LossWeights lw;
    go.step = kNetworkStep;
    for (const char* pname : {"enc1.weight", "dec4.weight", "flow2.weight", "dec1.bias"}) {
      std::size_t index = 0;
      while (base.names[index] != pname) ++index;
      for (LossMode mode : {LossMode::guided, LossMode::finetune}) {
        auto fn = [&](const T& t) {
          ModelParams<double> p = base.clone(false);
          p.tensors[index] = t;
          MultiscaleInputs<double> in{forward(p, i1, i2), proxy, i1, i2};
          return multiscale_loss(in, lw, mode);
        };
        const std::string name = std::string("multiscale_loss/") +
                                 (mode == LossMode::guided ? "guided/" : "finetune/") + pname;
        go.seed = derive_seed(options.seed, reports.size());
        reports.push_back(gradcheck(fn, base.tensors[index], go, name));
      }
    }
  }
  return reports;
}

}  // namespace gofl
