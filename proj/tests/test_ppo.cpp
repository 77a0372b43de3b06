#include <doctest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "kintro/ppo.hpp"

#include <cmath>

using namespace kintro;
using namespace kintro::testing;

namespace {

std::vector<double> double_sum_gae(const std::vector<double>& r, const std::vector<double>& v, double g, double l) {
  const std::size_t T = r.size();
  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = t; u < T; ++u)
      out[t] += std::pow(g * l, static_cast<double>(u - t)) * (r[u] + g * v[u + 1] - v[u]);
  return out;
}

Vector gae(const std::vector<double>& r, const std::vector<double>& v, double g, double l) {
  return gae_advantages<double>(r, v, g, l);
}

}  // namespace

TEST_CASE("GAE worked example and targets") {
  const std::vector<double> r{0.0, 0.0, 0.3}, v{0.1, 0.2, 0.05, 0.0};
  const Vector a = gae(r, v, 1.0, 0.95);
  CHECK(std::abs(a(0) - 0.183125) < 1e-12);
  CHECK(std::abs(a(1) - 0.0875) < 1e-12);
  CHECK(std::abs(a(2) - 0.25) < 1e-12);
  const std::vector<double> av(a.data(), a.data() + a.size());
  const Vector t = value_targets<double>(av, v);
  CHECK(std::abs(t(0) - 0.283125) < 1e-12);
  CHECK(std::abs(t(1) - 0.2875) < 1e-12);
  CHECK(std::abs(t(2) - 0.3) < 1e-12);
}

TEST_CASE("GAE special cases") {
  const Vector one = gae({0.7}, {0.2, 0.0}, 1.0, 0.95);
  CHECK(one(0) == doctest::Approx(0.5).epsilon(1e-15));

  const std::vector<double> r{0.1, -0.2, 0.4}, v{0.3, 0.1, -0.05, 0.0};
  const Vector d = gae(r, v, 0.9, 0.0);
  for (std::size_t t = 0; t < 3; ++t)
    CHECK(d(static_cast<Eigen::Index>(t)) == r[t] + 0.9 * v[t + 1] - v[t]);

  // lambda = gamma = 1: targets are the Monte-Carlo return
  const std::vector<double> rr{0.0, 0.0, 0.0, 0.8}, vv{0.3, -0.2, 0.9, 0.4, 0.0};
  const Vector aa = gae(rr, vv, 1.0, 1.0);
  const std::vector<double> av(aa.data(), aa.data() + aa.size());
  const Vector tt = value_targets<double>(av, vv);
  for (Eigen::Index t = 0; t < 4; ++t) CHECK(tt(t) == doctest::Approx(0.8).epsilon(1e-14));

  CHECK_THROWS_AS(gae({0.1, 0.2}, {0.0, 0.0}, 1.0, 0.9), Error);
}

TEST_CASE("GAE recursion equals the double sum on random episodes") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1, 1), gl(0.5, 1.0);
  std::uniform_int_distribution<std::size_t> len(1, 32);
  for (int e = 0; e < 200; ++e) {
    const std::size_t T = len(rng);
    std::vector<double> r(T), v(T + 1);
    for (auto& x : r) x = u(rng);
    for (auto& x : v) x = u(rng);
    v[T] = 0.0;
    const double g = gl(rng), l = gl(rng);
    const Vector a = gae(r, v, g, l);
    const auto o = double_sum_gae(r, v, g, l);
    for (std::size_t t = 0; t < T; ++t) CHECK(std::abs(a(static_cast<Eigen::Index>(t)) - o[t]) <= 1e-12);
  }
}

TEST_CASE("clipped surrogate objective") {
  CHECK(cso(0.7, 1.0, 0.2) == 0.7);
  CHECK(cso(-0.7, 1.0, 0.2) == -0.7);
  CHECK(cso(2.0, 1.5, 0.2) == 2.4);
  CHECK(cso(-1.0, 0.5, 0.2) == -0.8);
  // pessimistic side is never clipped away
  CHECK(cso(2.0, 0.5, 0.2) == 1.0);
  CHECK(cso(-1.0, 1.5, 0.2) == -1.5);
}

TEST_CASE("policy loss at theta = theta_old is minus the mean advantage") {
  Rng rng(2);
  const auto m = random_model(rng, HeadKind::token_distribution);
  auto ro = random_rollouts(rng, m, 0.0);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : ro)
    for (double a : r.advantages) {
      sum += a;
      ++n;
    }
  const auto pl = policy_loss(ro, m, 0.2);
  CHECK(pl.loss == doctest::Approx(-sum / static_cast<double>(n)).epsilon(1e-12));
  CHECK(pl.clip_fraction == 0.0);
  CHECK(pl.terms == n);
}

TEST_CASE("a small policy step increases the advantage-weighted log-likelihood") {
  Rng rng(3);
  const auto m = random_model(rng, HeadKind::token_distribution);
  const auto ro = random_rollouts(rng, m, 0.0);
  Vector dir = Vector::Zero(static_cast<Eigen::Index>(m.parameter_count()));
  for (const auto& r : ro) {
    const auto trace = run_forward(m, r.question, r.actions);
    dir += backward(m, trace, logprob_head_gradient(trace, r.actions, r.advantages));
  }
  SequenceModel stepped = m;
  stepped.params() -= 1e-3 * policy_loss(ro, m, 0.2).gradient;
  CHECK((stepped.params() - m.params()).dot(dir) > 0.0);
}

TEST_CASE("value loss") {
  Rng rng(4);
  const auto pol = random_model(rng, HeadKind::token_distribution);
  const auto val = random_model(rng, HeadKind::scalar_value);
  auto ro = random_rollouts(rng, pol);
  for (auto& r : ro) {
    const Vector v = forward_value(val, r.question, r.actions);
    for (std::size_t t = 0; t < r.length(); ++t) r.value_targets[t] = v(static_cast<Eigen::Index>(t));
  }
  CHECK(value_loss(ro, val).loss == doctest::Approx(0.0).epsilon(1e-15));
  for (auto& r : ro)
    for (auto& x : r.value_targets) x -= 0.3;
  CHECK(value_loss(ro, val).loss == doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("joint loss") {
  CHECK(joint_loss(0.2, 0.3, 0.0) == 0.2);
  CHECK(joint_loss(0.2, 0.3, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("checkpoint selection") {
  CHECK(select_checkpoint(std::vector<ValidationRecord>{{0, 0.5}, {1, 0.7}, {2, 0.6}}) == 1);
  CHECK(select_checkpoint(std::vector<ValidationRecord>{{0, 0.7}, {1, 0.7}}) == 0);
  CHECK(select_checkpoint(std::vector<ValidationRecord>{{5, 0.1}}) == 0);
  CHECK_THROWS_AS(select_checkpoint(std::vector<ValidationRecord>{}), Error);
}

TEST_CASE("advantage whitening") {
  Rng rng(5);
  const auto m = random_model(rng, HeadKind::token_distribution);
  auto ro = random_rollouts(rng, m);
  ro.push_back(ro.front());
  whiten_advantages(ro);
  double s = 0, s2 = 0;
  std::size_t n = 0;
  for (const auto& r : ro)
    for (double a : r.advantages) {
      s += a;
      s2 += a * a;
      ++n;
    }
  CHECK(std::abs(s / n) < 1e-12);
  CHECK(std::sqrt(s2 / n - (s / n) * (s / n)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("config validation") {
  PPOConfig c;
  CHECK_NOTHROW(c.validate());
  c.epsilon = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PPOConfig{};
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PPOConfig{};
  c.lag_interval = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

namespace {

PPOResult short_run(const TrainedFixture& fx, PPOConfig pc, RewardSpec spec, std::uint64_t seed = 3) {
  const auto scorer = fx.world.scorer();
  SequenceModel value(fx.config.value_shape(fx.world.vocab.size()), fx.world.vocab.hash());
  value.copy_body_from(fx.imitation);
  return train_ppo(pc, spec, fx.imitation, value, snapshot(fx.imitation), scorer, {fx.world.train}, {fx.world.dev},
                   fx.world.vocab, seed);
}

PPOConfig small_ppo() {
  PPOConfig pc = preset_config("tiny").ppo;
  pc.batch_size = 8;
  pc.total_steps = 8;
  pc.eval_interval = 1;
  pc.learning_rate = 1e-3;
  return pc;
}

}  // namespace

TEST_CASE("train_ppo: zero steps returns the initial policy") {
  const auto& fx = trained_fixture();
  PPOConfig pc = small_ppo();
  pc.total_steps = 0;
  const auto r = short_run(fx, pc, {});
  CHECK(r.best_policy.params() == fx.imitation.params());
  CHECK(r.history.size() == 1);
  CHECK(r.episodes == 0);
}

TEST_CASE("train_ppo: bookkeeping, frozen scorer and reproducibility") {
  const auto& fx = trained_fixture();
  const PPOConfig pc = small_ppo();
  const auto a = short_run(fx, pc, {});
  CHECK(a.metrics.size() == 8);
  CHECK(a.episodes == 2 * pc.batch_size);  // 8 steps at lag interval 4
  CHECK(a.scorer_hash_before == a.scorer_hash_after);
  CHECK(a.history.front().step == 0);
  CHECK(a.history.size() == 3);
  CHECK(a.final_policy.params() != fx.imitation.params());
  const auto b = short_run(fx, pc, {});
  CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
  CHECK(a.final_policy.params() == b.final_policy.params());
  CHECK(a.final_value.params() == b.final_value.params());

  const std::string csv = metrics_csv(a.metrics);
  CHECK(csv.rfind("step,mean_raw_reward,mean_normalized_reward,mean_kl_term,policy_loss,value_loss,dev_accuracy\n", 0) == 0);

  // thread count does not change the trajectory
  PPOConfig threaded = pc;
  threaded.threads = 3;
  CHECK(metrics_csv(short_run(fx, threaded, {}).metrics) == csv);
}

TEST_CASE("train_ppo: option paths run") {
  const auto& fx = trained_fixture();
  PPOConfig pc = small_ppo();
  pc.whiten_advantages = false;
  CHECK_NOTHROW(short_run(fx, pc, {}));
  pc.tempered_ratios = true;
  RewardSpec spec;
  spec.kl_mode = KlMode::per_token;
  spec.variant = RewardVariant::hard_activation;
  const auto r = short_run(fx, pc, spec);
  CHECK(r.scorer_hash_before == r.scorer_hash_after);
}

TEST_CASE("train_ppo: rollouts carry consistent per-step data") {
  const auto& fx = trained_fixture();
  const auto scorer = fx.world.scorer();
  const PPOConfig pc = small_ppo();
  RewardSpec spec;
  SequenceModel value(fx.config.value_shape(fx.world.vocab.size()), fx.world.vocab.hash());
  Rng rng(4);
  const auto& inst = fx.world.train.instances[0];
  auto ro = collect_rollout(pc, spec, fx.imitation, value, fx.imitation, scorer, inst,
                            format_question(inst, fx.world.vocab), rng);
  finalize_rollout(ro, pc.gamma, pc.lambda);
  const std::size_t T = ro.length();
  REQUIRE(T >= 1);
  CHECK(ro.values.size() == T + 1);
  CHECK(ro.values[T] == 0.0);
  CHECK(ro.rewards.size() == T);
  CHECK(ro.advantages.size() == T);
  CHECK(ro.value_targets.size() == T);
  std::size_t nonzero = 0;
  for (std::size_t t = 0; t + 1 < T; ++t) nonzero += ro.rewards[t] != 0.0;
  CHECK(nonzero == 0);
  CHECK(ro.rewards[T - 1] == ro.reward.total);
  // policy and imitation coincide, so the KL term vanishes
  CHECK(ro.reward.kl_term == 0.0);
  CHECK(ro.logp_current == ro.logp_imit);
}
