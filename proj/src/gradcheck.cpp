#include "gofl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gofl/errors.hpp"

namespace gofl {

GradcheckReport gradcheck(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                          const Tensor<double>& input, const GradcheckOptions& options,
                          std::string name) {
  GradcheckReport report;
  report.name = std::move(name);

  Tensor<double> x = input.detach(true);
  Tensor<double> loss = fn(x);
  backward(loss);
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  std::vector<std::size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(options.points, coords.size()));

  const std::vector<double> base(input.values().begin(), input.values().end());
  for (std::size_t idx : coords) {
    auto eval_at = [&](double delta) {
      std::vector<double> shifted = base;
      shifted[idx] += delta;
      return fn(Tensor<double>::from(input.shape(), std::move(shifted))).item();
    };
    const double numeric = (eval_at(options.step) - eval_at(-options.step)) / (2.0 * options.step);
    const double a = analytic[idx];
    const double scale = std::max({std::abs(a), std::abs(numeric), options.scale_floor});
    const double rel = std::abs(a - numeric) / scale;
    report.max_relative_error = std::max(report.max_relative_error, rel);
    report.max_abs_analytic = std::max(report.max_abs_analytic, std::abs(a));
    ++report.points_checked;
  }
  report.passed = report.points_checked > 0 && report.max_relative_error < options.tolerance &&
                  std::isfinite(report.max_relative_error);
  return report;
}

}  // namespace gofl
