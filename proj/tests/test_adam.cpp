#include <doctest.h>

#include <cmath>

#include "gofl/adam.hpp"
#include "gofl/errors.hpp"
#include "support.hpp"

using namespace gofl;

namespace {

void set_grad(Tensor<double>& t, const std::vector<double>& g) {
  auto span = t.mutable_grad();
  std::copy(g.begin(), g.end(), span.begin());
}

}  // namespace

TEST_SUITE("adam") {

TEST_CASE("zero gradient leaves parameters unchanged") {
  std::vector<Tensor<double>> params{Tensor<double>::from(Shape(1, 1, 1, 3), {1.0, -2.0, 0.5}, true)};
  auto state = AdamState<double>::for_params(params);
  set_grad(params[0], {0.0, 0.0, 0.0});
  adam_step(params, state, 1e-3);
  CHECK(params[0].values()[0] == 1.0);
  CHECK(params[0].values()[1] == -2.0);
  CHECK(params[0].values()[2] == 0.5);
  CHECK(state.step == 1);
}

TEST_CASE("first step with unit gradient moves by about lr") {
  std::vector<Tensor<double>> params{Tensor<double>::from(Shape(1, 1, 1, 1), {0.0}, true)};
  auto state = AdamState<double>::for_params(params);
  set_grad(params[0], {1.0});
  adam_step(params, state, 1e-4);
  // m_hat = 1, v_hat = 1: update = lr / (1 + eps).
  CHECK(params[0].values()[0] == doctest::Approx(-1e-4 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("two steps match a scripted Adam recurrence") {
  const std::vector<double> p0{0.3, -1.2, 2.5, 0.0};
  const std::vector<double> g{0.7, -0.05, 1.5, -3.0};
  std::vector<Tensor<double>> params{Tensor<double>::from(Shape(1, 1, 2, 2), p0, true)};
  auto state = AdamState<double>::for_params(params);
  const double lr = 2e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;

  std::vector<double> p = p0, m(4, 0.0), v(4, 0.0);
  for (int t = 1; t <= 2; ++t) {
    set_grad(params[0], g);
    adam_step(params, state, lr);
    for (std::size_t i = 0; i < 4; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  CHECK(state.step == 2);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(params[0].values()[i] - p[i]) < 1e-10);
    CHECK(std::abs(state.first_moment[0][i] - m[i]) < 1e-10);
    CHECK(std::abs(state.second_moment[0][i] - v[i]) < 1e-10);
  }
}

TEST_CASE("missing gradients and misaligned state are errors") {
  std::vector<Tensor<double>> params{Tensor<double>::zeros(Shape(1, 1, 1, 2), true)};
  auto state = AdamState<double>::for_params(params);
  CHECK_THROWS_AS(adam_step(params, state, 1e-3), DataError);
  set_grad(params[0], {1.0, 1.0});
  state.first_moment[0].resize(1);
  CHECK_THROWS_AS(adam_step(params, state, 1e-3), ShapeError);
}

TEST_CASE("float steps agree with the double recurrence") {
  Rng rng(3);
  std::vector<float> p0(37), g(37);
  for (auto& x : p0) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : g) x = static_cast<float>(rng.uniform(-1, 1));
  std::vector<Tensor<float>> pf{Tensor<float>::from(Shape(1, 1, 1, 37), p0, true)};
  std::vector<Tensor<double>> pd{
      Tensor<double>::from(Shape(1, 1, 1, 37), std::vector<double>(p0.begin(), p0.end()), true)};
  auto sf = AdamState<float>::for_params(pf);
  auto sd = AdamState<double>::for_params(pd);
  for (int t = 0; t < 5; ++t) {
    std::copy(g.begin(), g.end(), pf[0].mutable_grad().begin());
    std::copy(g.begin(), g.end(), pd[0].mutable_grad().begin());
    adam_step(pf, sf, 1e-2f);
    adam_step(pd, sd, 1e-2);
  }
  for (std::size_t i = 0; i < 37; ++i) CHECK(std::abs(pf[0].values()[i] - pd[0].values()[i]) < 1e-6);
}

}  // TEST_SUITE
