// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/types.hpp"

#include <cmath>
#include <cstddef>
#include <span>

namespace kintro {

/// Numerically stable softmax of a vector expression.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  const S top = logits.maxCoeff();
  VectorX<S> e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

template <typename Derived>
VectorX<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  const S top = logits.maxCoeff();
  const S lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

/// Column-wise softmax.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  MatrixX<typename Derived::Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) out.col(c) = softmax(logits.col(c));
  return out;
}

/// Index of the largest coefficient; ties go to the lowest index.
template <typename Derived>
std::size_t argmax_first(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<std::size_t>(best);
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

}  // namespace kintro
