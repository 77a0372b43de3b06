// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/keyed_fact_world.hpp"
#include "kintro/sequence_model.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kintro {

struct SilverPair {
  TokenSeq question;   // formatted question
  TokenSeq knowledge;  // without <eos>
  std::string source;  // "key_fact" or "other_entity"
};

/// For every training question, `per_question` knowledge statements: the
/// question entity's key fact with probability 1 - noise, otherwise the key
/// fact of a uniformly chosen other entity.
std::vector<SilverPair> generate_silver(const KeyedFactWorld& world, std::size_t per_question, double noise,
                                        Rng& rng);

void write_silver(const std::filesystem::path& path, std::span<const SilverPair> pairs, const Vocab& vocab);
std::vector<SilverPair> load_silver(const std::filesystem::path& path, const Vocab& vocab);

struct LossResultImitation {
  double loss = 0.0;
  Vector gradient;
  std::size_t tokens = 0;
};

/// Negative log-likelihood of k followed by <eos>, averaged per token over the batch.
double imitation_loss(const SequenceModel& policy, std::span<const SilverPair> pairs);
LossResultImitation imitation_loss_and_gradient(const SequenceModel& policy, std::span<const SilverPair> pairs,
                                                std::size_t threads = 1);

struct ImitationConfig {
  std::size_t batch_size = 64;
  std::size_t steps = 50000;
  double learning_rate = 1e-5;
  double heldout_fraction = 0.1;
  double max_grad_norm = 1.0;
  std::size_t threads = 1;

  void validate() const;
};

struct ImitationLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0.0;   // mean over the epoch's minibatches
  double heldout_nll = 0.0;  // per-token, on the held-out silver pairs
};

struct ImitationResult {
  SequenceModel policy;
  std::vector<ImitationLogRow> log;
};

/// Adam on shuffled minibatches; held-out NLL logged after every epoch.
ImitationResult train_imitation(const ImitationConfig& config, SequenceModel policy,
                                const std::vector<SilverPair>& pairs, std::uint64_t seed);

std::string imitation_log_csv(std::span<const ImitationLogRow> rows);

}  // namespace kintro
