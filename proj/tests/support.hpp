#pragma once

// Shared helpers for the unit tests: random instances and scratch directories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "gofl/random.hpp"
#include "gofl/tensor.hpp"

namespace gofl::test {

template <typename T>
Tensor<T> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from(shape, std::move(v), requires_grad);
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gofl_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Largest elementwise |a - b| over two equally sized ranges.
template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace gofl::test
