// Copyright 2026 The RFTF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RFTF_ERRORS_HPP_
#define RFTF_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace rftf {

// Bad dimensions, bad hyperparameters, malformed variant layouts.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated a documented precondition (stepping a done episode,
// out-of-range action, fewer than two values in a pairwise loss).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/inf surfaced where the math requires finite values.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rftf

#endif  // RFTF_ERRORS_HPP_
