// SPDX-License-Identifier: Apache-2.0
#include "kintro/ppo.hpp"

#include "kintro/math.hpp"
#include "kintro/optim.hpp"
#include "kintro/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace kintro {

void PPOConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCategory::config, "ppo config: " + m); };
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail("epsilon must be in (0, 1)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must be in [0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (lag_interval < 1) fail("lag_interval must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(alpha >= 0.0)) fail("alpha must be >= 0");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (max_knowledge_len < 1) fail("max_knowledge_len must be at least 1");
  if (eval_interval < 1) fail("eval_interval must be at least 1");
}

std::size_t select_checkpoint(std::span<const ValidationRecord> history) {
  if (history.empty()) throw Error(ErrorCategory::precondition, "select_checkpoint: no validation recorded");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i].accuracy > history[best].accuracy) best = i;
  return best;
}

Rollout collect_rollout(const PPOConfig& config, const RewardSpec& reward, const SequenceModel& policy,
                        const SequenceModel& value, const SequenceModel& imitation, const FrozenScorer& scorer,
                        const QAInstance& instance, const TokenSeq& question, Rng& rng) {
  Rollout ro;
  ro.question = question;
  const auto sample =
      sample_sequence(policy, question, DecodeMode::tempered(config.temperature), config.max_knowledge_len, rng);
  ro.actions = sample.tokens;
  ro.knowledge = sample.knowledge();
  ro.logp_old = sample.model_logprobs;
  ro.logp_current = sample.model_logprobs;
  ro.logp_old_tempered = sample.sample_logprobs;

  const Vector imit = token_logprobs(run_forward(imitation, question, ro.actions), ro.actions);
  ro.logp_imit.assign(imit.data(), imit.data() + imit.size());

  const Vector v = forward_value(value, question, ro.actions);
  ro.values.assign(v.data(), v.data() + v.size());
  ro.values.back() = 0.0;

  const std::size_t T = ro.length();
  auto& b = ro.reward;
  b.raw = shaped_reward(scorer, question, instance, ro.knowledge, reward.variant);
  b.normalized = reward.norm ? normalize(reward, b.raw) : b.raw;
  double log_ratio = 0.0;
  for (std::size_t t = 0; t < T; ++t) log_ratio += ro.logp_current[t] - ro.logp_imit[t];
  b.kl_term = reward.beta * log_ratio;
  if (reward.kl_mode == KlMode::sequence) {
    b.total = kl_penalized(reward, b.normalized, log_ratio, 0.0);
    b.per_step = terminal_assign(b.total, T);
  } else {
    b.per_step.assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) b.per_step[t] = -reward.beta * (ro.logp_current[t] - ro.logp_imit[t]);
    b.per_step.back() += b.normalized;
    b.total = b.normalized - b.kl_term;
  }
  ro.rewards = b.per_step;
  return ro;
}

void finalize_rollout(Rollout& ro, double gamma, double lambda) {
  const Vector adv = gae_advantages<double>(ro.rewards, ro.values, gamma, lambda);
  ro.advantages.assign(adv.data(), adv.data() + adv.size());
  const Vector targ = value_targets<double>(ro.advantages, ro.values);
  ro.value_targets.assign(targ.data(), targ.data() + targ.size());
}

void whiten_advantages(std::span<Rollout> rollouts) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rollouts)
    for (double a : r.advantages) {
      sum += a;
      ++n;
    }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& r : rollouts)
    for (double a : r.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  const double scale = sd > 1e-8 ? 1.0 / sd : 1.0;
  for (auto& r : rollouts)
    for (double& a : r.advantages) a = (a - mean) * scale;
}

LossResult policy_loss(std::span<const Rollout> rollouts, const SequenceModel& policy, double epsilon,
                       std::optional<double> temperature, std::size_t threads) {
  LossResult out;
  out.gradient = Vector::Zero(static_cast<Eigen::Index>(policy.parameter_count()));
  std::size_t n = 0;
  for (const auto& r : rollouts) n += r.length();
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double tau = temperature.value_or(1.0);

  std::vector<Vector> grads(rollouts.size());
  std::vector<double> sums(rollouts.size(), 0.0);
  std::vector<std::size_t> clipped(rollouts.size(), 0);
  parallel_for(rollouts.size(), threads, [&](std::size_t i) {
    const auto& ro = rollouts[i];
    const auto trace = run_forward(policy, ro.question, ro.actions);
    const Vector lp = token_logprobs(trace, ro.actions, tau);
    const auto& old = temperature ? ro.logp_old_tempered : ro.logp_old;
    std::vector<double> coeff(ro.length(), 0.0);
    for (std::size_t t = 0; t < ro.length(); ++t) {
      const double nu = std::exp(lp(static_cast<Eigen::Index>(t)) - old[t]);
      if (!std::isfinite(nu))
        throw Error(ErrorCategory::numeric, "non-finite policy ratio (policy collapse): log ratio " +
                                                std::to_string(lp(static_cast<Eigen::Index>(t)) - old[t]));
      const double a = ro.advantages[t];
      const double unclipped = nu * a;
      const double clip_term = std::clamp(nu, 1.0 - epsilon, 1.0 + epsilon) * a;
      sums[i] -= std::min(unclipped, clip_term);
      if (unclipped <= clip_term) coeff[t] = -a * nu * inv_n;  // d(-nu A)/dlogp = -nu A
      else ++clipped[i];
    }
    grads[i] = backward(policy, trace, logprob_head_gradient(trace, ro.actions, coeff, tau));
  });
  std::size_t n_clipped = 0;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    out.loss += sums[i];
    out.gradient += grads[i];
    n_clipped += clipped[i];
  }
  out.loss *= inv_n;
  out.terms = n;
  out.clip_fraction = static_cast<double>(n_clipped) * inv_n;
  return out;
}

LossResult value_loss(std::span<const Rollout> rollouts, const SequenceModel& value, std::size_t threads) {
  LossResult out;
  out.gradient = Vector::Zero(static_cast<Eigen::Index>(value.parameter_count()));
  std::size_t n = 0;
  for (const auto& r : rollouts) n += r.length();
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<Vector> grads(rollouts.size());
  std::vector<double> sums(rollouts.size(), 0.0);
  parallel_for(rollouts.size(), threads, [&](std::size_t i) {
    const auto& ro = rollouts[i];
    const auto trace = run_forward(value, ro.question, ro.actions);
    Matrix d = Matrix::Zero(1, static_cast<Eigen::Index>(trace.num_states));
    for (std::size_t t = 0; t < ro.length(); ++t) {
      const double diff = trace.head_out(0, static_cast<Eigen::Index>(t)) - ro.value_targets[t];
      sums[i] += diff * diff;
      d(0, static_cast<Eigen::Index>(t)) = 2.0 * diff * inv_n;
    }
    grads[i] = backward(value, trace, d);
  });
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    out.loss += sums[i];
    out.gradient += grads[i];
  }
  out.loss *= inv_n;
  out.terms = n;
  return out;
}

PPOResult train_ppo(const PPOConfig& config, const RewardSpec& reward, SequenceModel policy, SequenceModel value,
                    const ParamSnapshot& imitation, const FrozenScorer& scorer,
                    const std::vector<Dataset>& seen_train, const std::vector<Dataset>& dev, const Vocab& vocab,
                    std::uint64_t seed) {
  config.validate();
  reward.validate();
  if (config.max_knowledge_len > policy.shape().max_output_len)
    throw Error(ErrorCategory::config, "ppo max_knowledge_len exceeds the policy's max output length");

  struct PoolItem {
    const QAInstance* instance;
    TokenSeq question;
  };
  std::vector<PoolItem> pool;
  for (const auto& ds : seen_train)
    for (const auto& inst : ds.instances) pool.push_back({&inst, format_question(inst, vocab)});
  if (pool.empty()) throw Error(ErrorCategory::precondition, "train_ppo: no training instances");

  std::vector<ScorerProbe> probes;
  for (std::size_t i = 0; i < pool.size() && i < 64; ++i) {
    probes.push_back({pool[i].question, pool[i].instance->candidates});
    probes.push_back({concat_prompt(pool[i].question, pool[i].question), pool[i].instance->candidates});
  }

  PPOResult result;
  result.scorer_hash_before = scorer_fingerprint(scorer, probes);

  EvalOptions val_opts;
  val_opts.greedy = true;
  val_opts.max_len = config.max_knowledge_len;
  val_opts.threads = config.threads;
  const std::uint64_t val_seed = derive_seed(seed, {0x56414cULL});

  result.history.push_back({0, union_accuracy(scorer, policy, dev, vocab, val_opts, val_seed)});
  result.best_policy = policy;

  Adam policy_opt(static_cast<Eigen::Index>(policy.parameter_count()));
  Adam value_opt(static_cast<Eigen::Index>(value.parameter_count()));

  std::vector<std::size_t> order(pool.size());
  std::size_t cursor = order.size(), epoch = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      Rng perm = make_rng(seed, {0x5045524dULL, epoch++});
      std::shuffle(order.begin(), order.end(), perm);
      cursor = 0;
    }
    return order[cursor++];
  };

  const auto& imit_model = imitation.model();
  const std::optional<double> ratio_tau =
      config.tempered_ratios ? std::optional<double>(config.temperature) : std::nullopt;
  std::size_t step = 0;
  for (std::size_t iteration = 1; step < config.total_steps; ++iteration) {
    std::vector<std::size_t> batch(config.batch_size);
    for (auto& b : batch) b = next_index();

    // theta == theta_old and phi == phi_old here: the lagging copies were refreshed
    // at the end of the previous iteration.
    std::vector<Rollout> rollouts(batch.size());
    parallel_for(batch.size(), config.threads, [&](std::size_t i) {
      Rng rng = make_rng(seed, {0x524f4c4cULL, iteration, i});
      const auto& item = pool[batch[i]];
      rollouts[i] = collect_rollout(config, reward, policy, value, imit_model, scorer, *item.instance,
                                    item.question, rng);
      rollouts[i].instance = batch[i];
      finalize_rollout(rollouts[i], config.gamma, config.lambda);
    });
    if (config.whiten_advantages) whiten_advantages(rollouts);
    result.episodes += rollouts.size();

    double raw = 0.0, norm = 0.0, kl = 0.0;
    for (const auto& r : rollouts) {
      raw += r.reward.raw;
      norm += r.reward.normalized;
      kl += r.reward.kl_term;
    }
    const double inv_b = 1.0 / static_cast<double>(rollouts.size());

    for (std::size_t inner = 0; inner < config.lag_interval && step < config.total_steps; ++inner) {
      const double lr = linear_decay(config.learning_rate, static_cast<long>(step),
                                     static_cast<long>(config.total_steps));
      auto pl = policy_loss(rollouts, policy, config.epsilon, ratio_tau, config.threads);
      auto vl = value_loss(rollouts, value, config.threads);
      const double total = joint_loss(pl.loss, vl.loss, config.alpha);
      if (!std::isfinite(total))
        throw Error(ErrorCategory::numeric, "non-finite PPO loss at step " + std::to_string(step + 1) +
                                                " (policy " + std::to_string(pl.loss) + ", value " +
                                                std::to_string(vl.loss) + ")");
      Vector value_grad = config.alpha * vl.gradient;
      clip_grad_norm(pl.gradient, config.max_grad_norm);
      clip_grad_norm(value_grad, config.max_grad_norm);
      policy_opt.step(policy.params(), pl.gradient, lr);
      value_opt.step(value.params(), value_grad, lr);
      ++step;
      result.metrics.push_back({step, raw * inv_b, norm * inv_b, kl * inv_b, pl.loss, vl.loss, std::nullopt});
    }

    const bool last = step >= config.total_steps;
    if (iteration % config.eval_interval == 0 || last) {
      const double acc = union_accuracy(scorer, policy, dev, vocab, val_opts, val_seed);
      result.metrics.back().dev_accuracy = acc;
      result.history.push_back({step, acc});
      if (select_checkpoint(result.history) == result.history.size() - 1) result.best_policy = policy;
    }
  }

  result.best_index = select_checkpoint(result.history);
  result.final_policy = std::move(policy);
  result.final_value = std::move(value);
  result.scorer_hash_after = scorer_fingerprint(scorer, probes);
  if (result.scorer_hash_after != result.scorer_hash_before)
    throw Error(ErrorCategory::integrity, "QA scorer outputs changed during PPO training");
  return result;
}

std::string metrics_csv(std::span<const StepMetrics> rows) {
  std::ostringstream out;
  out << "step,mean_raw_reward,mean_normalized_reward,mean_kl_term,policy_loss,value_loss,dev_accuracy\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.step << ',' << num(r.mean_raw_reward) << ',' << num(r.mean_normalized_reward) << ','
        << num(r.mean_kl_term) << ',' << num(r.policy_loss) << ',' << num(r.value_loss) << ',';
    if (r.dev_accuracy) out << num(*r.dev_accuracy);
    out << '\n';
  }
  return out.str();
}

}  // namespace kintro
