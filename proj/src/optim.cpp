// SPDX-License-Identifier: Apache-2.0
#include "kintro/optim.hpp"

#include <cmath>

namespace kintro {

Adam::Adam(Eigen::Index size, AdamConfig config)
    : cfg_(config), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad, double learning_rate) {
  if (grad.size() != params.size() || grad.size() != m_.size())
    throw Error(ErrorCategory::precondition, "Adam: gradient size does not match parameters");
  ++t_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  params.array() -= learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
}

double clip_grad_norm(Vector& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace kintro
