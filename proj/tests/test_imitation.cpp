#include <doctest.h>

#include "fixtures.hpp"
#include "kintro/imitation.hpp"
#include "kintro/sampling.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace kintro;
using namespace kintro::testing;

namespace {

KeyedFactWorld default_world() {
  Rng rng(1);
  return make_keyed_fact_world(WorldConfig{}, rng);
}

}  // namespace

TEST_CASE("silver generation respects the noise level") {
  const auto w = default_world();
  Rng rng(2);
  const auto clean = generate_silver(w, 5, 0.0, rng);
  CHECK(clean.size() == 5 * w.train.instances.size());
  for (const auto& p : clean) {
    const auto e = *w.entity_of(p.question);
    CHECK(w.contains_key_fact(p.knowledge, e));
    CHECK(p.source == "key_fact");
  }

  const auto noisy = generate_silver(w, 10, 1.0, rng);
  REQUIRE(noisy.size() >= 1000);
  for (const auto& p : noisy) {
    const auto e = *w.entity_of(p.question);
    CHECK_FALSE(w.contains_key_fact(p.knowledge, e));
    CHECK(w.entity_of(p.knowledge) != e);
  }

  const auto mixed = generate_silver(w, 20, 0.2, rng);
  std::size_t key = 0;
  for (const auto& p : mixed) key += p.source == "key_fact";
  const double frac = static_cast<double>(key) / mixed.size();
  const double sigma = std::sqrt(0.8 * 0.2 / mixed.size());
  CHECK(std::abs(frac - 0.8) < 4 * sigma);
  CHECK_THROWS_AS(generate_silver(w, 1, 1.5, rng), Error);
}

TEST_CASE("silver JSONL round trip") {
  const auto w = default_world();
  Rng rng(3);
  const auto pairs = generate_silver(w, 2, 0.5, rng);
  TempDir dir("silver");
  write_silver(dir / "s.jsonl", pairs, w.vocab);
  const auto back = load_silver(dir / "s.jsonl", w.vocab);
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(back[i].question == pairs[i].question);
    CHECK(back[i].knowledge == pairs[i].knowledge);
    CHECK(back[i].source == pairs[i].source);
  }
}

TEST_CASE("imitation loss under a uniform policy is ln V per token") {
  SequenceModel m(small_shape(10, 3, 3), 0);
  Rng rng(4);
  const std::vector<SilverPair> pairs{{{4, 5}, {6, 7, 8}, ""}, {{9}, {5}, ""}};
  CHECK(imitation_loss(m, pairs) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  const auto lg = imitation_loss_and_gradient(m, pairs);
  CHECK(lg.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(lg.tokens == 6);  // 3 + 1 tokens, plus one <eos> each
}

TEST_CASE("imitation loss vanishes for a policy that is certain of the targets") {
  SequenceModel m(small_shape(10, 3, 3), 0);
  m.weights().head_b(Vocab::kEos) = 60.0;
  const std::vector<SilverPair> pairs{{{4, 5}, {}, ""}};
  const double loss = imitation_loss(m, pairs);
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-20);
}

TEST_CASE("zero steps leave the parameters unchanged") {
  const auto w = default_world();
  Rng rng(5);
  const auto pairs = generate_silver(w, 2, 0.2, rng);
  const auto m = SequenceModel::random(small_shape(w.vocab.size(), 4, 4), w.vocab.hash(), rng);
  ImitationConfig c;
  c.steps = 0;
  CHECK(train_imitation(c, m, pairs, 1).policy.params() == m.params());
}

TEST_CASE("loss decreases monotonically when overfitting one example") {
  Rng rng(6);
  const auto m = SequenceModel::random(small_shape(12, 4, 6), 0, rng);
  const std::vector<SilverPair> one{{{4, 5, 6}, {7, 8}, ""}};
  ImitationConfig c;
  c.batch_size = 1;
  c.heldout_fraction = 0.0;
  c.learning_rate = 1e-2;
  SequenceModel cur = m;
  double prev = imitation_loss(cur, one);
  for (int i = 0; i < 20; ++i) {
    c.steps = 1;
    cur = train_imitation(c, cur, one, static_cast<std::uint64_t>(i)).policy;
    const double now = imitation_loss(cur, one);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("trained introspector beats the uniform bound and reproduces key facts") {
  const auto& fx = trained_fixture();
  const ImitationConfig c = fx.config.imitation;
  const auto res = train_imitation(c, fx.initial, fx.silver, 7);
  REQUIRE(!res.log.empty());
  CHECK(res.log.back().heldout_nll < std::log(static_cast<double>(fx.world.vocab.size())));
  CHECK(res.policy.params() == fx.imitation.params());

  std::size_t hits = 0;
  Rng rng(1);
  for (const auto& inst : fx.world.train.instances) {
    const TokenSeq q = format_question(inst, fx.world.vocab);
    const auto s = sample_sequence(res.policy, q, DecodeMode::greedy(), 32, rng);
    hits += fx.world.contains_key_fact(s.knowledge(), *fx.world.entity_of(inst.question));
  }
  CHECK(static_cast<double>(hits) / fx.world.train.instances.size() >= 0.7);

  const std::string csv = imitation_log_csv(res.log);
  CHECK(csv.rfind("epoch,step,train_loss,heldout_nll\n", 0) == 0);
}
