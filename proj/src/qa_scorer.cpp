// SPDX-License-Identifier: Apache-2.0
#include "kintro/qa_scorer.hpp"

#include "kintro/math.hpp"
#include "kintro/rng.hpp"

#include <bit>
#include <numeric>

namespace kintro {

double FrozenScorer::token_logprob(std::span<const TokenId> prompt, std::span<const TokenId> answer,
                                   std::size_t position) const {
  const auto lps = answer_token_logprobs(prompt, answer);
  if (position >= lps.size()) throw Error(ErrorCategory::precondition, "answer position out of range");
  return lps[position];
}

double answer_score(const FrozenScorer& scorer, std::span<const TokenId> prompt, std::span<const TokenId> answer) {
  if (answer.empty()) throw Error(ErrorCategory::precondition, "answer must be non-empty");
  const auto lps = scorer.answer_token_logprobs(prompt, answer);
  return std::accumulate(lps.begin(), lps.end(), 0.0) / static_cast<double>(lps.size());
}

Vector answer_scores(const FrozenScorer& scorer, std::span<const TokenId> prompt,
                     const std::vector<TokenSeq>& candidates) {
  Vector s(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t i = 0; i < candidates.size(); ++i)
    s(static_cast<Eigen::Index>(i)) = answer_score(scorer, prompt, candidates[i]);
  return s;
}

Vector answer_prob(const FrozenScorer& scorer, std::span<const TokenId> prompt,
                   const std::vector<TokenSeq>& candidates) {
  if (candidates.size() < 2) throw Error(ErrorCategory::precondition, "answer_prob needs at least 2 candidates");
  return softmax(answer_scores(scorer, prompt, candidates));
}

std::size_t predict(const FrozenScorer& scorer, std::span<const TokenId> prompt,
                    const std::vector<TokenSeq>& candidates) {
  return argmax_first(answer_prob(scorer, prompt, candidates));
}

ModelScorer::ModelScorer(SequenceModel model, std::string name) : model_(std::move(model)), name_(std::move(name)) {
  if (model_.shape().head != HeadKind::token_distribution)
    throw Error(ErrorCategory::precondition, "ModelScorer needs a token-distribution model");
}

std::vector<double> ModelScorer::answer_token_logprobs(std::span<const TokenId> prompt,
                                                       std::span<const TokenId> answer) const {
  const auto trace = run_forward(model_, prompt, answer);
  const Vector lp = token_logprobs(trace, answer);
  return {lp.data(), lp.data() + lp.size()};
}

std::uint64_t scorer_fingerprint(const FrozenScorer& scorer, std::span<const ScorerProbe> probes) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (const auto& probe : probes)
    for (const auto& c : probe.candidates)
      for (double lp : scorer.answer_token_logprobs(probe.prompt, c)) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(lp));
  return h;
}

}  // namespace kintro
