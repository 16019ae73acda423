// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tdlt {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. The CLI maps these to process exit codes:
//   ConfigError -> 2, DataError -> 3, NumericError -> 4.
// ShapeError / ParamError indicate misuse of a library call and surface as
// config errors when they reach the CLI boundary.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace tdlt
