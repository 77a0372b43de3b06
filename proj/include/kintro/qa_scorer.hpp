// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/dataset.hpp"
#include "kintro/sequence_model.hpp"
#include "kintro/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace kintro {

/// Frozen QA model: log p(a_i | prompt, a_<i) for every answer token.
/// Implementations are immutable; every method is safe to call concurrently.
class FrozenScorer {
 public:
  virtual ~FrozenScorer() = default;

  virtual std::string name() const = 0;
  virtual std::vector<double> answer_token_logprobs(std::span<const TokenId> prompt,
                                                    std::span<const TokenId> answer) const = 0;

  double token_logprob(std::span<const TokenId> prompt, std::span<const TokenId> answer,
                       std::size_t position) const;
};

/// S(a | prompt): mean per-token log-probability of the answer. Higher is better.
double answer_score(const FrozenScorer& scorer, std::span<const TokenId> prompt, std::span<const TokenId> answer);

/// S for every candidate, in order.
Vector answer_scores(const FrozenScorer& scorer, std::span<const TokenId> prompt,
                     const std::vector<TokenSeq>& candidates);

/// P(a | prompt) = softmax over the candidates' scores.
Vector answer_prob(const FrozenScorer& scorer, std::span<const TokenId> prompt,
                   const std::vector<TokenSeq>& candidates);

/// argmax of answer_prob; ties go to the lowest index.
std::size_t predict(const FrozenScorer& scorer, std::span<const TokenId> prompt,
                    const std::vector<TokenSeq>& candidates);

/// Scores answers with a trained token-distribution SequenceModel, reading the
/// prompt as its question and the answer as its continuation.
class ModelScorer final : public FrozenScorer {
 public:
  ModelScorer(SequenceModel model, std::string name = "model");

  std::string name() const override { return name_; }
  std::vector<double> answer_token_logprobs(std::span<const TokenId> prompt,
                                            std::span<const TokenId> answer) const override;

 private:
  const SequenceModel model_;
  std::string name_;
};

struct ScorerProbe {
  TokenSeq prompt;
  std::vector<TokenSeq> candidates;
};

/// Hash of the bit patterns of every candidate score over the probes. Equal
/// hashes before and after training evidence an unchanged scorer.
std::uint64_t scorer_fingerprint(const FrozenScorer& scorer, std::span<const ScorerProbe> probes);

}  // namespace kintro
