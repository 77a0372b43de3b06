// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/dataset.hpp"
#include "kintro/qa_scorer.hpp"
#include "kintro/sampling.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kintro {

enum class RewardVariant { tanh_margin, prob_only, prob_diff, score_diff, hard_activation };

std::string variant_name(RewardVariant v);
RewardVariant parse_variant(std::string_view name);

/// Where the KL-to-imitation penalty is paid: once at the terminal step on the
/// whole sequence, or per token (the latter is an experiment switch).
enum class KlMode { sequence, per_token };

std::string kl_mode_name(KlMode m);
KlMode parse_kl_mode(std::string_view name);

struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct RewardSpec {
  RewardVariant variant = RewardVariant::tanh_margin;
  double beta = 0.2;
  KlMode kl_mode = KlMode::sequence;
  std::optional<NormStats> norm;

  void validate() const;
};

struct RewardBreakdown {
  double raw = 0.0;         // r(x, k)
  double normalized = 0.0;  // r after (r - mu0) / sigma0, or r when unnormalized
  double kl_term = 0.0;     // beta * (log p_theta(k) - log p_imit(k))
  double total = 0.0;       // R(x, k) = normalized - kl_term
  std::vector<double> per_step;
};

/// S(a* | .) - max_{a != a*} S(a | .) over precomputed scores.
double margin_from_scores(const Vector& scores, std::size_t gold);

double margin(const FrozenScorer& scorer, std::span<const TokenId> prompt,
              const std::vector<TokenSeq>& candidates, std::size_t gold);

/// Shaped reward from candidate scores with (`with_k`) and without knowledge.
double shaped_from_scores(const Vector& with_k, const Vector& without_k, std::size_t gold, RewardVariant variant);

/// r(x, k) for the formatted question q. k empty means no knowledge.
double shaped_reward(const FrozenScorer& scorer, std::span<const TokenId> question, const QAInstance& instance,
                     std::span<const TokenId> knowledge, RewardVariant variant);

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// R = r - beta * (logp_current - logp_imit).
double kl_penalized(const RewardSpec& spec, double r, double logp_current, double logp_imit);

/// Length-T vector, zero except the last entry which holds R.
std::vector<double> terminal_assign(double reward, std::size_t length);

/// Population mean and standard deviation; throws Error(numeric) when the
/// deviation is below 1e-8.
NormStats population_stats(std::span<const double> values);

/// (r - mu0) / sigma0. Throws Error(precondition) without stats.
double normalize(const RewardSpec& spec, double r);

/// Samples one knowledge per training instance from the imitation policy and
/// returns the population statistics of the raw rewards.
NormStats estimate_norm_stats(const SequenceModel& imitation_policy, const FrozenScorer& scorer,
                              const std::vector<QAInstance>& train, const Vocab& vocab, RewardVariant variant,
                              const DecodeMode& mode, std::size_t max_len, std::uint64_t seed,
                              std::vector<double>* raw_rewards = nullptr);

}  // namespace kintro
