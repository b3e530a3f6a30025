#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gofl/errors.hpp"
#include "gofl/gradcheck.hpp"
#include "gofl/ops.hpp"
#include "gofl/warping.hpp"
#include "support.hpp"

using namespace gofl;

namespace {

// Reference bilinear read with clamped taps, independent of axis_taps.
double bilinear_oracle(const Tensor<double>& img, std::size_t n, std::size_t c, double x,
                       double y) {
  const long h = static_cast<long>(img.shape().h());
  const long w = static_cast<long>(img.shape().w());
  const long x0 = static_cast<long>(std::floor(x));
  const long y0 = static_cast<long>(std::floor(y));
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  auto px = [&](long yy, long xx) {
    yy = std::clamp(yy, 0L, h - 1);
    xx = std::clamp(xx, 0L, w - 1);
    return img.at(n, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
         fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

Tensor<double> grid_at(double x, double y) {
  return Tensor<double>::from(Shape(1, 2, 1, 1), {x, y});
}

}  // namespace

TEST_SUITE("warping") {
  TEST_CASE("identity grid reproduces the image exactly") {
    Rng rng(3);
    const auto img = test::random_tensor<double>(rng, Shape(2, 3, 5, 7));
    const auto out = bilinear_sample(img, identity_grid<double>(2, 5, 7));
    CHECK(test::max_abs_diff(out.values(), img.values()) == 0.0);
  }

  TEST_CASE("two by two midpoint") {
    const auto img = Tensor<double>::from(Shape(1, 1, 2, 2), {0, 1, 2, 3});
    CHECK(bilinear_sample(img, grid_at(0.5, 0.5)).item() == doctest::Approx(1.5));
    CHECK(bilinear_sample(img, grid_at(1.0, 0.0)).item() == doctest::Approx(1.0));
    CHECK(bilinear_sample(img, grid_at(-5.0, -5.0)).item() == 0.0);
    CHECK(bilinear_sample(img, grid_at(40.0, 40.0)).item() == 3.0);
    CHECK(bilinear_sample(img, grid_at(0.25, 1.0)).item() == doctest::Approx(2.25));
  }

  TEST_CASE("matches the clamped bilinear oracle at random coordinates") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6);
      const auto img = test::random_tensor<double>(rng, Shape(1, 2, h, w));
      const auto grid = test::random_tensor<double>(rng, Shape(1, 2, 3, 3), -3.0, 9.0);
      const auto out = bilinear_sample(img, grid);
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t y = 0; y < 3; ++y) {
          for (std::size_t x = 0; x < 3; ++x) {
            const double expect =
                bilinear_oracle(img, 0, c, grid.at(0, 0, y, x), grid.at(0, 1, y, x));
            REQUIRE(out.at(0, c, y, x) == doctest::Approx(expect).epsilon(1e-12));
          }
        }
      }
    }
  }

  TEST_CASE("zero flow warp is exact") {
    Rng rng(5);
    const auto i2 = test::random_tensor<float>(rng, Shape(2, 1, 8, 8), 0.0, 1.0);
    const auto out = inverse_warp(i2, Tensor<float>::zeros(Shape(2, 2, 8, 8)));
    for (std::size_t i = 0; i < out.numel(); ++i) REQUIRE(out.values()[i] == i2.values()[i]);
  }

  TEST_CASE("integer shift recovers the source away from the border") {
    Rng rng(8);
    const std::size_t h = 6, w = 9;
    const auto i1 = test::random_tensor<double>(rng, Shape(1, 1, h, w), 0.0, 1.0);
    std::vector<double> i2v(h * w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) i2v[y * w + x] = x >= 2 ? i1.at(0, 0, y, x - 2) : 0.7;
    }
    const auto i2 = Tensor<double>::from(Shape(1, 1, h, w), i2v);
    std::vector<double> fv(2 * h * w, 0.0);
    std::fill(fv.begin(), fv.begin() + static_cast<long>(h * w), 2.0);
    const auto warped = inverse_warp(i2, Tensor<double>::from(Shape(1, 2, h, w), fv));
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x + 2 < w; ++x) REQUIRE(warped.at(0, 0, y, x) == i1.at(0, 0, y, x));
    }
  }

  TEST_CASE("warped values stay within the source range") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const auto i2 = test::random_tensor<float>(rng, Shape(1, 1, 6, 6), -2.0, 3.0);
      const auto flow = test::random_tensor<float>(rng, Shape(1, 2, 6, 6), -10.0, 10.0);
      const auto out = inverse_warp(i2, flow);
      const auto [lo, hi] = std::minmax_element(i2.values().begin(), i2.values().end());
      for (float v : out.values()) {
        REQUIRE(v >= *lo - 1e-5f);
        REQUIRE(v <= *hi + 1e-5f);
      }
    }
  }

  TEST_CASE("gradients match finite differences") {
    Rng rng(31);
    const auto img = test::random_tensor<double>(rng, Shape(1, 2, 5, 6));
    // Fractional offsets keep probes away from the kinks at integer coordinates.
    auto flow = test::random_tensor<double>(rng, Shape(1, 2, 5, 6), -1.8, 1.8);
    for (auto& v : flow.mutable_values()) {
      const double frac = v - std::floor(v);
      if (frac < 0.05 || frac > 0.95) v += 0.3;
    }
    const auto weights = test::random_tensor<double>(rng, Shape(1, 2, 5, 6));
    auto wrt_flow = [&](const Tensor<double>& f) { return sum(mul(inverse_warp(img, f), weights)); };
    auto wrt_img = [&](const Tensor<double>& i) { return sum(mul(inverse_warp(i, flow), weights)); };
    const auto rf = gradcheck(wrt_flow, flow, {.step = 1e-6, .points = 30}, "flow");
    const auto ri = gradcheck(wrt_img, img, {.step = 1e-6, .points = 30}, "image");
    CHECK(rf.passed);
    CHECK(ri.passed);
    CHECK(rf.max_relative_error < 1e-6);
    CHECK(ri.max_relative_error < 1e-6);
  }

  TEST_CASE("warp_image agrees with the tensor warp") {
    Rng rng(2);
    Image i2(7, 5, 3);
    for (auto& v : i2.data) v = static_cast<float>(rng.uniform());
    FlowField flow(7, 5);
    for (auto& v : flow.u) v = static_cast<float>(rng.uniform(-3, 3));
    for (auto& v : flow.v) v = static_cast<float>(rng.uniform(-3, 3));
    const Image out = warp_image(i2, flow);

    std::vector<float> planar(3 * 35), fv(2 * 35);
    for (std::size_t p = 0; p < 35; ++p) {
      for (std::size_t c = 0; c < 3; ++c) planar[c * 35 + p] = i2.data[p * 3 + c];
      fv[p] = flow.u[p];
      fv[35 + p] = flow.v[p];
    }
    const auto t = inverse_warp(Tensor<float>::from(Shape(1, 3, 7, 5), planar),
                                Tensor<float>::from(Shape(1, 2, 7, 5), fv));
    for (std::size_t p = 0; p < 35; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        REQUIRE(out.data[p * 3 + c] == doctest::Approx(t.values()[c * 35 + p]).epsilon(1e-6));
      }
    }
    CHECK_THROWS_AS(warp_image(i2, FlowField(7, 4)), ShapeError);
  }

  TEST_CASE("shape mismatches are rejected") {
    const auto img = Tensor<double>::zeros(Shape(1, 1, 4, 4));
    CHECK_THROWS_AS(bilinear_sample(img, Tensor<double>::zeros(Shape(1, 3, 4, 4))), ShapeError);
    CHECK_THROWS_AS(bilinear_sample(img, Tensor<double>::zeros(Shape(2, 2, 4, 4))), ShapeError);
    CHECK_THROWS_AS(inverse_warp(img, Tensor<double>::zeros(Shape(1, 2, 4, 5))), ShapeError);
  }
}
