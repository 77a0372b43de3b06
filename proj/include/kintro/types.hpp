// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kintro {

using Scalar = double;

template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<Scalar>;
using Matrix = MatrixX<Scalar>;

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

enum class ErrorCategory {
  config,        // bad configuration or command-line usage
  io,            // missing or unreadable artifact
  data,          // malformed dataset / checkpoint content
  numeric,       // NaN, divergence, degenerate statistics
  precondition,  // caller broke an operation contract
  integrity,     // frozen component changed underneath us
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::precondition: return "precondition";
    case ErrorCategory::integrity: return "integrity";
  }
  return "unknown";
}

/// Process exit code for a failure of the given category (0 is success).
constexpr int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::io: return 3;
    case ErrorCategory::data: return 4;
    case ErrorCategory::numeric: return 5;
    case ErrorCategory::precondition: return 6;
    case ErrorCategory::integrity: return 7;
  }
  return 1;
}

}  // namespace kintro
