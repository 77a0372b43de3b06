// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/dataset.hpp"
#include "kintro/inference.hpp"
#include "kintro/qa_scorer.hpp"
#include "kintro/reward.hpp"
#include "kintro/sequence_model.hpp"

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kintro {

struct PPOConfig {
  double alpha = 1.0;    // value-loss weight
  double gamma = 1.0;
  double lambda = 0.95;  // GAE
  double epsilon = 0.2;  // surrogate clip range
  std::size_t lag_interval = 4;  // optimization steps per minibatch before refreshing the lagging copies
  std::size_t batch_size = 64;
  std::size_t total_steps = 15625;
  double learning_rate = 2e-5;  // decays linearly to zero over total_steps
  double temperature = 0.7;     // rollout sampling temperature
  std::size_t max_knowledge_len = 32;
  bool whiten_advantages = true;
  /// Ratios from temperature-adjusted rather than raw model probabilities.
  bool tempered_ratios = false;
  std::size_t eval_interval = 10;  // iterations between validation runs
  double max_grad_norm = 1.0;      // <= 0 disables clipping
  std::size_t threads = 1;

  void validate() const;
};

/// A_t = sum_{t'=t}^{T} (gamma lambda)^{t'-t} delta_t',
/// delta_t = r_t + gamma V(s_{t+1}) - V(s_t), by the backward recursion.
/// rewards has length T, values length T+1 (values[T] is the post-terminal state).
template <typename S>
VectorX<S> gae_advantages(std::span<const S> rewards, std::span<const S> values, S gamma, S lambda) {
  if (values.size() != rewards.size() + 1)
    throw Error(ErrorCategory::precondition, "gae: values must have exactly one more entry than rewards");
  const std::size_t T = rewards.size();
  VectorX<S> adv(static_cast<Eigen::Index>(T));
  S running = S(0);
  for (std::size_t i = T; i-- > 0;) {
    const S delta = rewards[i] + gamma * values[i + 1] - values[i];
    running = delta + gamma * lambda * running;
    adv(static_cast<Eigen::Index>(i)) = running;
  }
  return adv;
}

/// V^targ_t = A_t + V(s_t), both from the lagging value model.
template <typename S>
VectorX<S> value_targets(std::span<const S> advantages, std::span<const S> values) {
  if (values.size() < advantages.size())
    throw Error(ErrorCategory::precondition, "value_targets: fewer values than advantages");
  VectorX<S> out(static_cast<Eigen::Index>(advantages.size()));
  for (std::size_t t = 0; t < advantages.size(); ++t) out(static_cast<Eigen::Index>(t)) = advantages[t] + values[t];
  return out;
}

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
inline double cso(double advantage, double ratio, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

struct Rollout {
  std::size_t instance = 0;  // index into the training pool
  TokenSeq question;         // formatted question q
  TokenSeq actions;          // k_1..k_T, the trailing <eos> included when emitted
  TokenSeq knowledge;        // actions without the trailing <eos>
  std::vector<double> logp_current;   // raw log p(k_t | s_t), current policy at rollout time
  std::vector<double> logp_old;       // raw, lagging policy
  std::vector<double> logp_old_tempered;  // lagging policy at the sampling temperature
  std::vector<double> logp_imit;      // raw, imitation policy
  std::vector<double> values;         // V(s_1..s_{T+1}; phi_old), values[T] = 0
  std::vector<double> rewards;        // r_1..r_T
  std::vector<double> advantages;     // A_1..A_T
  std::vector<double> value_targets;  // V^targ_1..V^targ_T
  RewardBreakdown reward;

  std::size_t length() const { return actions.size(); }
};

struct LossResult {
  double loss = 0.0;
  Vector gradient;
  std::size_t terms = 0;
  double clip_fraction = 0.0;
};

/// Mean over every token in the batch of -cso(A_t, nu_t, eps) with
/// nu_t = p_theta(k_t) / p_old(k_t). Advantages are constants. When
/// `temperature` is set both probabilities are taken at that temperature.
LossResult policy_loss(std::span<const Rollout> rollouts, const SequenceModel& policy, double epsilon,
                       std::optional<double> temperature = std::nullopt, std::size_t threads = 1);

/// Mean over every state s_1..s_T in the batch of (V(s_t; phi) - V^targ_t)^2.
LossResult value_loss(std::span<const Rollout> rollouts, const SequenceModel& value, std::size_t threads = 1);

inline double joint_loss(double policy, double value, double alpha) { return policy + alpha * value; }

struct ValidationRecord {
  std::size_t step = 0;
  double accuracy = 0.0;
};

struct StepMetrics {
  std::size_t step = 0;
  double mean_raw_reward = 0.0;
  double mean_normalized_reward = 0.0;
  double mean_kl_term = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  std::optional<double> dev_accuracy;
};

/// Argmax of the recorded accuracies, earliest on ties.
std::size_t select_checkpoint(std::span<const ValidationRecord> history);

struct PPOResult {
  SequenceModel best_policy;
  SequenceModel final_policy;
  SequenceModel final_value;
  std::vector<ValidationRecord> history;
  std::size_t best_index = 0;
  std::vector<StepMetrics> metrics;
  std::uint64_t scorer_hash_before = 0;
  std::uint64_t scorer_hash_after = 0;
  std::size_t episodes = 0;
};

/// Builds one rollout: samples at the configured temperature from `policy`
/// (which is the lagging policy at rollout time), scores it and assigns rewards.
/// Advantages and targets are left for the caller (see finalize_rollout).
Rollout collect_rollout(const PPOConfig& config, const RewardSpec& reward, const SequenceModel& policy,
                        const SequenceModel& value, const SequenceModel& imitation, const FrozenScorer& scorer,
                        const QAInstance& instance, const TokenSeq& question, Rng& rng);

/// Fills advantages and value targets from rewards and lagging values.
void finalize_rollout(Rollout& rollout, double gamma, double lambda);

/// Rescales every advantage of the batch to zero mean and unit variance.
void whiten_advantages(std::span<Rollout> rollouts);

/// Stage II. `policy` starts at the imitation parameters, `imitation` is the
/// frozen KL reference. Validation uses one greedy knowledge per question and
/// the best checkpoint by instance-weighted union accuracy is returned.
PPOResult train_ppo(const PPOConfig& config, const RewardSpec& reward, SequenceModel policy, SequenceModel value,
                    const ParamSnapshot& imitation, const FrozenScorer& scorer,
                    const std::vector<Dataset>& seen_train, const std::vector<Dataset>& dev, const Vocab& vocab,
                    std::uint64_t seed);

std::string metrics_csv(std::span<const StepMetrics> rows);

}  // namespace kintro
