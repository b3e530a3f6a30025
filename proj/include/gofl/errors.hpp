#pragma once

#include <stdexcept>
#include <string>

namespace gofl {

/// Tensor or grid extents that do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file contents (bad magic, unsupported variant).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File shorter than its header promises.
class LengthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unusable inputs at run time (files, manifest entries, labels).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gofl
