// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/rng.hpp"
#include "kintro/sequence_model.hpp"

#include <span>
#include <vector>

namespace kintro {

struct DecodeMode {
  enum class Kind { greedy, nucleus, temperature };
  Kind kind = Kind::greedy;
  double top_p = 1.0;
  double temperature = 1.0;

  static DecodeMode greedy() { return {}; }
  static DecodeMode nucleus(double p) { return {Kind::nucleus, p, 1.0}; }
  static DecodeMode tempered(double tau) { return {Kind::temperature, 1.0, tau}; }
};

struct SampledSequence {
  TokenSeq tokens;                      // includes the final <eos> when one was emitted
  std::vector<double> sample_logprobs;  // under the decoding-adjusted distribution
  std::vector<double> model_logprobs;   // under the raw model distribution
  bool reached_eos = false;

  /// Knowledge text: tokens without the trailing <eos>.
  TokenSeq knowledge() const;
};

/// Tokens of the smallest probability-sorted prefix whose cumulative mass
/// reaches p, sorted by descending probability with ties by ascending id.
std::vector<TokenId> nucleus_indices(const Vector& probs, double p);

/// probs restricted to the nucleus and renormalized (zero elsewhere).
Vector nucleus_distribution(const Vector& probs, double p);

/// Draws an index from a categorical distribution by inverse CDF.
TokenId sample_categorical(const Vector& probs, Rng& rng);

/// Decodes until <eos> or max_len tokens.
SampledSequence sample_sequence(const SequenceModel& policy, std::span<const TokenId> question,
                                const DecodeMode& mode, std::size_t max_len, Rng& rng);

}  // namespace kintro
