// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/types.hpp"

namespace kintro {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig config = {});

  void step(Vector& params, const Vector& grad, double learning_rate);
  long steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  Vector m_, v_;
  long t_ = 0;
};

/// Rescales grad in place so its L2 norm is at most max_norm (no-op when
/// max_norm <= 0). Returns the norm before clipping.
double clip_grad_norm(Vector& grad, double max_norm);

/// Linear decay from base to zero over total steps.
inline double linear_decay(double base, long step, long total) {
  if (total <= 0) return base;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return base * (frac > 0.0 ? frac : 0.0);
}

}  // namespace kintro
