// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace uses {

// Error taxonomy shared by the whole library. The CLI maps these onto
// process exit codes (config -> 2, io -> 3, numeric -> 4).
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes, axes or extents do not line up.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value or unusable combination of settings.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf encountered, divergence, or an undefined numeric quantity.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Filesystem / file-format failures.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void check_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline void check_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace uses
