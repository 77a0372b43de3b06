// SPDX-License-Identifier: Apache-2.0
#include "kintro/imitation.hpp"

#include "kintro/math.hpp"
#include "kintro/optim.hpp"
#include "kintro/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace kintro {
namespace {

TokenSeq with_eos(const TokenSeq& k) {
  TokenSeq out = k;
  out.push_back(Vocab::kEos);
  return out;
}

}  // namespace

std::vector<SilverPair> generate_silver(const KeyedFactWorld& world, std::size_t per_question, double noise,
                                        Rng& rng) {
  if (!(noise >= 0.0 && noise <= 1.0)) throw Error(ErrorCategory::config, "silver noise must be in [0, 1]");
  std::vector<SilverPair> out;
  out.reserve(world.train.instances.size() * per_question);
  std::uniform_int_distribution<std::size_t> other(0, world.entities.size() - 2);
  for (const auto& inst : world.train.instances) {
    const auto entity = world.entity_of(inst.question);
    if (!entity) throw Error(ErrorCategory::data, "training question without an entity");
    const TokenSeq q = format_question(inst, world.vocab);
    for (std::size_t m = 0; m < per_question; ++m) {
      if (uniform_open01(rng) < noise) {
        std::size_t e = other(rng);
        if (e >= *entity) ++e;
        out.push_back({q, world.key_fact(e), "other_entity"});
      } else {
        out.push_back({q, world.key_fact(*entity), "key_fact"});
      }
    }
  }
  return out;
}

void write_silver(const std::filesystem::path& path, std::span<const SilverPair> pairs, const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::io, "cannot write silver knowledge: " + path.string());
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["question"] = vocab.detokenize(p.question);
    j["knowledge"] = vocab.detokenize(p.knowledge);
    j["source"] = p.source;
    out << j.dump() << '\n';
  }
}

std::vector<SilverPair> load_silver(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io, "missing silver knowledge file: " + path.string());
  std::vector<SilverPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (normalize_whitespace(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SilverPair p;
      p.question = vocab.tokenize(j.at("question").get<std::string>());
      p.knowledge = vocab.tokenize(j.at("knowledge").get<std::string>());
      p.source = j.value("source", std::string("unknown"));
      if (p.knowledge.empty()) throw Error(ErrorCategory::data, "empty knowledge");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCategory::data, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.category(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw Error(ErrorCategory::data, path.string() + ": no silver pairs");
  return out;
}

double imitation_loss(const SequenceModel& policy, std::span<const SilverPair> pairs) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    const TokenSeq target = with_eos(p.knowledge);
    const Vector lp = token_logprobs(run_forward(policy, p.question, target), target);
    nll -= lp.sum();
    tokens += target.size();
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

LossResultImitation imitation_loss_and_gradient(const SequenceModel& policy, std::span<const SilverPair> pairs,
                                                std::size_t threads) {
  LossResultImitation out;
  out.gradient = Vector::Zero(static_cast<Eigen::Index>(policy.parameter_count()));
  for (const auto& p : pairs) out.tokens += p.knowledge.size() + 1;
  if (out.tokens == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(out.tokens);

  std::vector<Vector> grads(pairs.size());
  std::vector<double> nll(pairs.size(), 0.0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const TokenSeq target = with_eos(pairs[i].knowledge);
    const auto trace = run_forward(policy, pairs[i].question, target);
    nll[i] = -token_logprobs(trace, target).sum();
    const std::vector<double> coeff(target.size(), -inv_n);
    grads[i] = backward(policy, trace, logprob_head_gradient(trace, target, coeff));
  });
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.loss += nll[i];
    out.gradient += grads[i];
  }
  out.loss *= inv_n;
  return out;
}

void ImitationConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCategory::config, "imitation batch_size must be at least 1");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCategory::config, "imitation learning_rate must be >= 0");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
    throw Error(ErrorCategory::config, "imitation heldout_fraction must be in [0, 1)");
}

ImitationResult train_imitation(const ImitationConfig& config, SequenceModel policy,
                                const std::vector<SilverPair>& pairs, std::uint64_t seed) {
  config.validate();
  if (pairs.empty()) throw Error(ErrorCategory::precondition, "train_imitation: no silver pairs");

  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng split_rng = make_rng(seed, {0x53504c54ULL});
  std::shuffle(idx.begin(), idx.end(), split_rng);
  auto n_held = static_cast<std::size_t>(std::floor(config.heldout_fraction * static_cast<double>(pairs.size())));
  if (n_held >= pairs.size()) n_held = pairs.size() - 1;
  std::vector<SilverPair> heldout, train;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_held ? heldout : train).push_back(pairs[idx[i]]);

  ImitationResult result;
  Adam opt(static_cast<Eigen::Index>(policy.parameter_count()));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0, epoch = 0;
  while (step < config.steps) {
    Rng perm = make_rng(seed, {0x45504f43ULL, epoch});
    std::shuffle(order.begin(), order.end(), perm);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size() && step < config.steps; start += config.batch_size) {
      std::vector<SilverPair> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(train[order[i]]);
      auto lg = imitation_loss_and_gradient(policy, batch, config.threads);
      if (!std::isfinite(lg.loss))
        throw Error(ErrorCategory::numeric, "imitation loss diverged at step " + std::to_string(step + 1));
      clip_grad_norm(lg.gradient, config.max_grad_norm);
      opt.step(policy.params(), lg.gradient, config.learning_rate);
      epoch_loss += lg.loss;
      ++batches;
      ++step;
    }
    ++epoch;
    const double held = heldout.empty() ? std::nan("") : imitation_loss(policy, heldout);
    result.log.push_back({epoch, step, epoch_loss / static_cast<double>(batches), held});
  }
  result.policy = std::move(policy);
  return result;
}

std::string imitation_log_csv(std::span<const ImitationLogRow> rows) {
  std::ostringstream out;
  out << "epoch,step,train_loss,heldout_nll\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g\n", r.epoch, r.step, r.train_loss, r.heldout_nll);
    out << buf;
  }
  return out.str();
}

}  // namespace kintro
