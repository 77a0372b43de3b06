#pragma once

// Central finite-difference checks of the three training losses.

#include "kintro/imitation.hpp"
#include "kintro/ppo.hpp"
#include "test_util.hpp"

#include <cmath>
#include <functional>

namespace kintro::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
};

/// Relative error with an absolute floor in the denominator. Central
/// differences at h = 1e-5 carry roughly eps * |loss| / h ~ 1e-10 of rounding
/// noise, so coordinates whose gradient is below the floor (1e-5) are judged on
/// absolute error (|a - n| < 1e-9 for the 1e-4 tolerance) instead.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline GradCheck check_gradient(SequenceModel model, const Vector& analytic,
                                const std::function<double(const SequenceModel&)>& loss, double h = 1e-5) {
  GradCheck out;
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    const double x = model.params()(i);
    model.params()(i) = x + h;
    const double up = loss(model);
    model.params()(i) = x - h;
    const double down = loss(model);
    model.params()(i) = x;
    const double numeric = (up - down) / (2.0 * h);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic(i), numeric));
    out.max_abs_error = std::max(out.max_abs_error, std::abs(analytic(i) - numeric));
    ++out.coordinates;
  }
  return out;
}

inline SequenceModel random_model(Rng& rng, HeadKind head, std::size_t vocab = 20, std::size_t embed = 8,
                                  std::size_t hidden = 8) {
  return SequenceModel::random(small_shape(vocab, embed, hidden, head), 0, rng, 1.0, 1.0);
}

inline std::vector<SilverPair> random_pairs(Rng& rng, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> count(1, 4), qlen(1, 6), klen(0, 5);
  std::vector<SilverPair> pairs(count(rng));
  for (auto& p : pairs) {
    p.question = random_tokens(rng, qlen(rng), vocab);
    p.knowledge = random_tokens(rng, klen(rng), vocab);
  }
  return pairs;
}

/// Rollouts with behaviour log-probs from a perturbation of `policy`, so the
/// ratios spread around 1 and a share of them gets clipped.
inline std::vector<Rollout> random_rollouts(Rng& rng, const SequenceModel& policy, double spread = 0.3) {
  const std::size_t vocab = policy.shape().vocab_size;
  SequenceModel behaviour = policy;
  std::normal_distribution<double> noise(0.0, spread), unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < behaviour.params().size(); ++i) behaviour.params()(i) += noise(rng);

  std::uniform_int_distribution<std::size_t> count(1, 4), qlen(1, 6), klen(1, 6);
  std::vector<Rollout> out(count(rng));
  for (auto& r : out) {
    r.question = random_tokens(rng, qlen(rng), vocab);
    r.actions = random_tokens(rng, klen(rng), vocab);
    if (unit(rng) > 0.0) r.actions.back() = Vocab::kEos;
    const auto trace = run_forward(behaviour, r.question, r.actions);
    const Vector lp = token_logprobs(trace, r.actions);
    const Vector lpt = token_logprobs(trace, r.actions, 0.7);
    for (std::size_t t = 0; t < r.actions.size(); ++t) {
      r.logp_old.push_back(lp(static_cast<Eigen::Index>(t)));
      r.logp_old_tempered.push_back(lpt(static_cast<Eigen::Index>(t)));
      r.advantages.push_back(unit(rng));
      r.value_targets.push_back(unit(rng));
    }
  }
  return out;
}

inline GradCheck imitation_case(Rng& rng) {
  const SequenceModel m = random_model(rng, HeadKind::token_distribution);
  const auto pairs = random_pairs(rng, m.shape().vocab_size);
  const auto res = imitation_loss_and_gradient(m, pairs);
  return check_gradient(m, res.gradient, [&](const SequenceModel& x) { return imitation_loss(x, pairs); });
}

inline GradCheck policy_case(Rng& rng, std::optional<double> tau = std::nullopt) {
  const SequenceModel m = random_model(rng, HeadKind::token_distribution);
  const auto ro = random_rollouts(rng, m);
  const auto res = policy_loss(ro, m, 0.2, tau);
  return check_gradient(m, res.gradient, [&](const SequenceModel& x) { return policy_loss(ro, x, 0.2, tau).loss; });
}

inline GradCheck value_case(Rng& rng) {
  const SequenceModel pol = random_model(rng, HeadKind::token_distribution);
  const SequenceModel m = random_model(rng, HeadKind::scalar_value);
  const auto ro = random_rollouts(rng, pol);
  const auto res = value_loss(ro, m);
  return check_gradient(m, res.gradient, [&](const SequenceModel& x) { return value_loss(ro, x).loss; });
}

}  // namespace kintro::testing
