#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "gofl/tensor.hpp"

namespace gofl {

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  std::size_t points = 20;  // probed coordinates; all of them if the input is smaller
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error, so exact zeros compare in
  /// absolute terms.
  double scale_floor = 1e-6;
};

struct GradcheckReport {
  std::string name;
  std::size_t points_checked = 0;
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  bool passed = false;
};

/// Compares the analytic gradient of the scalar map `fn` at `input` with
/// central finite differences at randomly chosen coordinates. `fn` must be
/// pure; it is called once for the analytic pass and twice per probe.
/// relative error = |analytic - numeric| / max(|analytic|, |numeric|, floor)
GradcheckReport gradcheck(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                          const Tensor<double>& input, const GradcheckOptions& options = {},
                          std::string name = {});

}  // namespace gofl
