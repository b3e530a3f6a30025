#pragma once

// Finite-difference checks of every differentiable operation on the
// double-precision path.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gofl/gradcheck.hpp"

namespace gofl {

struct GradientSuiteOptions {
  std::size_t points = 20;
  double tolerance = 1e-3;
  std::uint64_t seed = 7;
};

/// One report per (operation, differentiated input) pair, including the full
/// multi-scale objective through a small network.
std::vector<GradcheckReport> run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace gofl
