// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/dataset.hpp"
#include "kintro/qa_scorer.hpp"
#include "kintro/rng.hpp"
#include "kintro/vocab.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace kintro {

struct WorldConfig {
  std::size_t entities = 16;
  std::size_t attributes = 8;
  std::size_t candidates = 3;
  std::size_t train_per_entity = 8;
  std::size_t dev_per_entity = 4;
  /// Score boost the gold answer receives when the prompt carries its key fact.
  double delta = 4.0;
  /// Score of the gold answer without the key fact.
  double base_score = -5.0;
  /// Distractor offsets are drawn from (0, eta_fraction * delta).
  double eta_fraction = 0.3;
  /// Fraction of instances on which the unprompted prediction is wrong.
  double fraction_wrong = 0.67;

  void validate() const;
};

/// Parameters of the synthetic scorer; everything it needs to be rebuilt.
struct OracleParams {
  std::unordered_map<TokenId, TokenId> fact_of;           // entity token -> gold attribute token
  std::unordered_map<TokenId, TokenSeq> key_fact_of;      // entity token -> key phrase tokens
  double base_score = -5.0;
  double delta = 4.0;
  double eta_cap = 1.2;
  double fraction_wrong = 0.67;
  std::uint64_t eta_seed = 0;
};

/// Synthetic frozen QA model over a keyed-fact world. For a prompt q or q∘k
/// about entity e:
///
///   S(gold | .)       = base + delta  if k contains e's key phrase, else base
///   S(distractor | .) = base + eta    if the instance is a "naive-wrong" one
///                       base - eta    otherwise
///
/// where eta in (0, eta_cap) and the naive-wrong flag are deterministic hashes
/// of (eta_seed, q) and (eta_seed, q, answer). Every answer token carries the
/// same log-probability, so the mean equals the score above.
class KeyedFactScorer final : public FrozenScorer {
 public:
  explicit KeyedFactScorer(OracleParams params) : params_(std::move(params)) {}

  std::string name() const override { return "keyed-fact-oracle"; }
  std::vector<double> answer_token_logprobs(std::span<const TokenId> prompt,
                                            std::span<const TokenId> answer) const override;

  /// Whether the unprompted prediction is rigged to be wrong for question q.
  bool naive_wrong(std::span<const TokenId> question) const;
  const OracleParams& params() const { return params_; }

 private:
  OracleParams params_;
};

struct KeyedFactWorld {
  WorldConfig config;
  Vocab vocab;
  std::vector<std::string> entities;
  std::vector<std::string> attributes;
  std::vector<std::size_t> facts;  // entity index -> attribute index
  std::vector<std::string> question_templates;  // "{entity}" placeholder
  std::string key_phrase = "{entity} is {attribute}";
  std::uint64_t eta_seed = 0;
  Dataset train;
  Dataset dev;

  /// Key phrase of entity i, e.g. "bear is red".
  TokenSeq key_fact(std::size_t entity) const;
  /// Index of the first entity token in `tokens`.
  std::optional<std::size_t> entity_of(std::span<const TokenId> tokens) const;
  /// Whether `knowledge` contains the key phrase of `entity` contiguously.
  bool contains_key_fact(std::span<const TokenId> knowledge, std::size_t entity) const;

  OracleParams oracle_params() const;
  KeyedFactScorer scorer() const { return KeyedFactScorer(oracle_params()); }

  /// World description without the datasets (those are written as JSONL).
  nlohmann::ordered_json to_json() const;
  static KeyedFactWorld from_json(const nlohmann::json& j);
};

/// Builds the world, its train/dev datasets and the scorer parameters.
/// Exactly round(fraction_wrong * n) instances of each split are naive-wrong.
KeyedFactWorld make_keyed_fact_world(const WorldConfig& config, Rng& rng);

bool contains_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle);

}  // namespace kintro
