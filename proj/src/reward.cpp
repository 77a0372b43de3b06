// SPDX-License-Identifier: Apache-2.0
#include "kintro/reward.hpp"

#include "kintro/math.hpp"

#include <cmath>
#include <limits>

namespace kintro {

std::string variant_name(RewardVariant v) {
  switch (v) {
    case RewardVariant::tanh_margin: return "tanh_margin";
    case RewardVariant::prob_only: return "prob_only";
    case RewardVariant::prob_diff: return "prob_diff";
    case RewardVariant::score_diff: return "score_diff";
    case RewardVariant::hard_activation: return "hard_activation";
  }
  return "tanh_margin";
}

RewardVariant parse_variant(std::string_view name) {
  for (auto v : {RewardVariant::tanh_margin, RewardVariant::prob_only, RewardVariant::prob_diff,
                 RewardVariant::score_diff, RewardVariant::hard_activation})
    if (variant_name(v) == name) return v;
  throw Error(ErrorCategory::config, "unknown reward variant '" + std::string(name) + "'");
}

std::string kl_mode_name(KlMode m) { return m == KlMode::sequence ? "sequence" : "per_token"; }

KlMode parse_kl_mode(std::string_view name) {
  if (name == "sequence") return KlMode::sequence;
  if (name == "per_token") return KlMode::per_token;
  throw Error(ErrorCategory::config, "unknown kl mode '" + std::string(name) + "'");
}

void RewardSpec::validate() const {
  if (!(beta >= 0.0)) throw Error(ErrorCategory::config, "reward beta must be >= 0");
  if (norm && !(norm->stddev > 0.0)) throw Error(ErrorCategory::config, "reward sigma0 must be > 0");
}

double margin_from_scores(const Vector& scores, std::size_t gold) {
  if (scores.size() < 2) throw Error(ErrorCategory::precondition, "margin needs at least 2 candidates");
  double best_other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (static_cast<std::size_t>(i) != gold) best_other = std::max(best_other, scores(i));
  return scores(static_cast<Eigen::Index>(gold)) - best_other;
}

double margin(const FrozenScorer& scorer, std::span<const TokenId> prompt,
              const std::vector<TokenSeq>& candidates, std::size_t gold) {
  return margin_from_scores(answer_scores(scorer, prompt, candidates), gold);
}

double shaped_from_scores(const Vector& with_k, const Vector& without_k, std::size_t gold, RewardVariant variant) {
  const auto g = static_cast<Eigen::Index>(gold);
  switch (variant) {
    case RewardVariant::tanh_margin:
      return 0.5 * (std::tanh(margin_from_scores(with_k, gold)) - std::tanh(margin_from_scores(without_k, gold)));
    case RewardVariant::prob_only: return softmax(with_k)(g);
    case RewardVariant::prob_diff: return softmax(with_k)(g) - softmax(without_k)(g);
    case RewardVariant::score_diff: return with_k(g) - without_k(g);
    case RewardVariant::hard_activation:
      return 0.5 * (sign_of(margin_from_scores(with_k, gold)) - sign_of(margin_from_scores(without_k, gold)));
  }
  return 0.0;
}

double shaped_reward(const FrozenScorer& scorer, std::span<const TokenId> question, const QAInstance& instance,
                     std::span<const TokenId> knowledge, RewardVariant variant) {
  const Vector without_k = answer_scores(scorer, question, instance.candidates);
  if (knowledge.empty()) return shaped_from_scores(without_k, without_k, instance.gold, variant);
  const Vector with_k = answer_scores(scorer, concat_prompt(question, knowledge), instance.candidates);
  return shaped_from_scores(with_k, without_k, instance.gold, variant);
}

double kl_penalized(const RewardSpec& spec, double r, double logp_current, double logp_imit) {
  return r - spec.beta * (logp_current - logp_imit);
}

std::vector<double> terminal_assign(double reward, std::size_t length) {
  if (length == 0) throw Error(ErrorCategory::precondition, "empty episode: T must be at least 1");
  std::vector<double> out(length, 0.0);
  out.back() = reward;
  return out;
}

NormStats population_stats(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCategory::precondition, "no rewards to estimate statistics from");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd >= 1e-8))
    throw Error(ErrorCategory::numeric,
                "initial rewards are degenerate (sigma0 < 1e-8); disable reward normalization or change the "
                "world/imitation config so that rewards vary");
  return {mean, sd};
}

double normalize(const RewardSpec& spec, double r) {
  if (!spec.norm) throw Error(ErrorCategory::precondition, "reward normalization statistics are missing");
  return (r - spec.norm->mean) / spec.norm->stddev;
}

NormStats estimate_norm_stats(const SequenceModel& imitation_policy, const FrozenScorer& scorer,
                              const std::vector<QAInstance>& train, const Vocab& vocab, RewardVariant variant,
                              const DecodeMode& mode, std::size_t max_len, std::uint64_t seed,
                              std::vector<double>* raw_rewards) {
  if (train.empty()) throw Error(ErrorCategory::precondition, "estimate_norm_stats: empty training set");
  std::vector<double> rewards;
  rewards.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const TokenSeq q = format_question(train[i], vocab);
    Rng rng = make_rng(seed, {0x4e4f524dULL, i});
    const auto sample = sample_sequence(imitation_policy, q, mode, max_len, rng);
    rewards.push_back(shaped_reward(scorer, q, train[i], sample.knowledge(), variant));
  }
  if (raw_rewards) *raw_rewards = rewards;
  return population_stats(rewards);
}

}  // namespace kintro
