// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/dataset.hpp"
#include "kintro/qa_scorer.hpp"
#include "kintro/sampling.hpp"

#include <json.hpp>

#include <span>
#include <vector>

namespace kintro {

/// K(q): the empty knowledge first, then M nucleus-p samples (duplicates kept).
std::vector<TokenSeq> generate_knowledge_set(const SequenceModel& policy, std::span<const TokenId> question,
                                             std::size_t count, double top_p, std::size_t max_len, Rng& rng);

struct AggregationResult {
  std::size_t answer = 0;     // argmax_a max_k P(a | q∘k)
  std::size_t knowledge = 0;  // argmax_k max_a P(a | q∘k)
  Matrix confidence;          // |K| x |A|, row k holds P(. | q∘k)
};

/// Both argmaxes break ties toward the lowest index, so the empty knowledge
/// (row 0) wins ties against sampled knowledge.
AggregationResult aggregate_confidences(Matrix confidence);

AggregationResult aggregate_predict(const FrozenScorer& scorer, std::span<const TokenId> question,
                                    const QAInstance& instance, const std::vector<TokenSeq>& knowledge_set);

struct EvalOptions {
  std::size_t knowledge_per_question = 10;
  double top_p = 0.5;
  std::size_t max_len = 32;
  /// One greedy knowledge instead of M nucleus samples (validation mode).
  bool greedy = false;
  std::size_t threads = 1;
};

struct EvalRecord {
  std::size_t index = 0;
  std::vector<TokenSeq> knowledge;
  AggregationResult result;
  bool correct = false;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<EvalRecord> records;
};

EvalResult evaluate(const FrozenScorer& scorer, const SequenceModel& policy, const Dataset& dataset,
                    const Vocab& vocab, const EvalOptions& options, std::uint64_t seed);

/// Instance-weighted accuracy over several datasets.
double union_accuracy(const FrozenScorer& scorer, const SequenceModel& policy, const std::vector<Dataset>& datasets,
                      const Vocab& vocab, const EvalOptions& options, std::uint64_t seed);

nlohmann::ordered_json record_to_json(const EvalRecord& record, const QAInstance& instance, const Vocab& vocab);

}  // namespace kintro
