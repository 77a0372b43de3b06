// SPDX-License-Identifier: Apache-2.0
#include "kintro/sampling.hpp"

#include "kintro/math.hpp"
#include "kintro/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kintro {

TokenSeq SampledSequence::knowledge() const {
  TokenSeq k = tokens;
  if (reached_eos && !k.empty()) k.pop_back();
  return k;
}

std::vector<TokenId> nucleus_indices(const Vector& probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCategory::precondition, "nucleus p must be in (0, 1]");
  std::vector<TokenId> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return probs(a) > probs(b); });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += probs(order[keep]);
    ++keep;
    if (mass >= p) break;
  }
  order.resize(keep);
  return order;
}

Vector nucleus_distribution(const Vector& probs, double p) {
  Vector out = Vector::Zero(probs.size());
  double mass = 0.0;
  for (TokenId t : nucleus_indices(probs, p)) {
    out(t) = probs(t);
    mass += probs(t);
  }
  return out / mass;
}

TokenId sample_categorical(const Vector& probs, Rng& rng) {
  const double u = uniform_open01(rng) * probs.sum();
  double acc = 0.0;
  TokenId last_nonzero = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    last_nonzero = static_cast<TokenId>(i);
    acc += probs(i);
    if (u < acc) return static_cast<TokenId>(i);
  }
  return last_nonzero;
}

SampledSequence sample_sequence(const SequenceModel& policy, std::span<const TokenId> question,
                                const DecodeMode& mode, std::size_t max_len, Rng& rng) {
  const auto& s = policy.shape();
  if (s.head != HeadKind::token_distribution)
    throw Error(ErrorCategory::precondition, "sample_sequence requires a policy model");
  if (max_len < 1) throw Error(ErrorCategory::precondition, "max_len must be at least 1");
  if (max_len > s.max_output_len)
    throw Error(ErrorCategory::precondition, "max_len exceeds the model's max output length");
  if (question.size() > s.max_input_len)
    throw Error(ErrorCategory::precondition, "question exceeds the model's max input length");

  const auto w = policy.weights();
  Vector h = Vector::Zero(static_cast<Eigen::Index>(s.hidden_dim));
  for (TokenId t : question) h = recurrent_step(w, h, t);
  h = recurrent_step(w, h, Vocab::kSep);

  SampledSequence out;
  for (std::size_t step = 0; step < max_len; ++step) {
    const Vector logits = w.head_w * h + w.head_b;
    const Vector logp = log_softmax(logits);
    TokenId tok = 0;
    double sample_lp = 0.0;
    switch (mode.kind) {
      case DecodeMode::Kind::greedy:
        tok = static_cast<TokenId>(argmax_first(logits));
        sample_lp = 0.0;
        break;
      case DecodeMode::Kind::nucleus: {
        const Vector probs = logp.array().exp().matrix();
        const Vector dist = nucleus_distribution(probs, mode.top_p);
        tok = sample_categorical(dist, rng);
        if (!(dist(tok) > 0.0)) throw Error(ErrorCategory::numeric, "sampled a token outside the nucleus");
        sample_lp = std::log(dist(tok));
        break;
      }
      case DecodeMode::Kind::temperature: {
        if (!(mode.temperature > 0.0)) throw Error(ErrorCategory::precondition, "temperature must be positive");
        const Vector dist = softmax(logits / mode.temperature);
        tok = sample_categorical(dist, rng);
        sample_lp = std::log(dist(tok));
        break;
      }
    }
    out.tokens.push_back(tok);
    out.sample_logprobs.push_back(sample_lp);
    out.model_logprobs.push_back(logp(tok));
    if (tok == Vocab::kEos) {
      out.reached_eos = true;
      break;
    }
    h = recurrent_step(w, h, tok);
  }
  return out;
}

}  // namespace kintro
