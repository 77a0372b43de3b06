#include <doctest.h>

#include "fixtures.hpp"
#include "kintro/inference.hpp"
#include "test_scorers.hpp"

using namespace kintro;
using namespace kintro::testing;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double x : row) m(i, j++) = x;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("aggregation examples") {
  const auto single = aggregate_confidences(rows({{0.2, 0.7, 0.1}}));
  CHECK(single.answer == 1);
  CHECK(single.knowledge == 0);

  const auto three = aggregate_confidences(rows({{0.6, 0.4}, {0.3, 0.7}, {0.55, 0.45}}));
  CHECK(three.answer == 1);
  CHECK(three.knowledge == 1);

  // ties favour the empty knowledge and the lower answer index
  const auto tie = aggregate_confidences(rows({{0.7, 0.3}, {0.3, 0.7}}));
  CHECK(tie.answer == 0);
  CHECK(tie.knowledge == 0);
}

TEST_CASE("aggregate_predict agrees with an exhaustive scan") {
  Rng rng(1);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<std::size_t> na(2, 5), nk(0, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t A = na(rng), K = nk(rng) + 1;
    // a random score for every (knowledge, answer) pair
    std::vector<std::vector<double>> table(K, std::vector<double>(A));
    for (auto& r : table)
      for (auto& x : r) x = n(rng);
    std::vector<TokenSeq> ks{{}};
    for (std::size_t k = 1; k < K; ++k) ks.push_back({static_cast<TokenId>(20 + k)});
    const FunctionScorer s([&](std::span<const TokenId> prompt, std::span<const TokenId> answer) {
      std::size_t k = 0;
      if (prompt.size() > 1 && prompt[prompt.size() - 2] == Vocab::kSep) k = static_cast<std::size_t>(prompt.back() - 20);
      return table[k][static_cast<std::size_t>(answer[0] - 10)];
    });
    QAInstance inst{{5}, {}, 0};
    for (std::size_t a = 0; a < A; ++a) inst.candidates.push_back({static_cast<TokenId>(10 + a)});
    const auto res = aggregate_predict(s, TokenSeq{5}, inst, ks);

    double best = -1;
    std::size_t ba = 0, bk = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const Vector p = answer_prob(s, concat_prompt(TokenSeq{5}, ks[k]), inst.candidates);
      CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t a = 0; a < A; ++a)
        if (p(static_cast<Eigen::Index>(a)) > best) {
          best = p(static_cast<Eigen::Index>(a));
          ba = a;
          bk = k;
        }
    }
    CHECK(res.knowledge == bk);
    CHECK(res.confidence(static_cast<Eigen::Index>(res.knowledge), static_cast<Eigen::Index>(res.answer)) == best);
    CHECK(res.confidence.row(static_cast<Eigen::Index>(bk)).maxCoeff() == best);
    (void)ba;
  }
}

TEST_CASE("knowledge sets start with the empty knowledge") {
  const auto& fx = trained_fixture();
  const auto& inst = fx.world.dev.instances[0];
  const TokenSeq q = format_question(inst, fx.world.vocab);
  Rng rng(2);
  const auto k0 = generate_knowledge_set(fx.imitation, q, 0, 0.5, 32, rng);
  CHECK(k0.size() == 1);
  CHECK(k0[0].empty());
  const auto k10 = generate_knowledge_set(fx.imitation, q, 10, 0.5, 4, rng);
  CHECK(k10.size() == 11);
  CHECK(k10[0].empty());
  for (const auto& k : k10) {
    CHECK(k.size() <= 4);
    for (TokenId t : k) CHECK(t != Vocab::kEos);
  }
}

TEST_CASE("evaluation reductions on the keyed-fact world") {
  const auto& fx = trained_fixture();
  const auto scorer = fx.world.scorer();

  // M = 0 reduces to the naive scorer prediction for any policy
  EvalOptions none;
  none.knowledge_per_question = 0;
  const auto plain = evaluate(scorer, fx.initial, fx.world.dev, fx.world.vocab, none, 1);
  std::size_t naive_ok = 0;
  for (const auto& inst : fx.world.dev.instances)
    naive_ok += predict(scorer, format_question(inst, fx.world.vocab), inst.candidates) == inst.gold;
  CHECK(plain.accuracy == static_cast<double>(naive_ok) / fx.world.dev.instances.size());

  // always supplying the key fact answers every question
  std::size_t ok = 0;
  for (const auto& inst : fx.world.dev.instances) {
    const TokenSeq q = format_question(inst, fx.world.vocab);
    const std::vector<TokenSeq> ks{{}, fx.world.key_fact(*fx.world.entity_of(inst.question))};
    ok += aggregate_predict(scorer, q, inst, ks).answer == inst.gold;
  }
  CHECK(ok == fx.world.dev.instances.size());

  // sampled knowledge never hurts on this world, and results are reproducible
  EvalOptions ten;
  ten.threads = 2;
  const auto with = evaluate(scorer, fx.imitation, fx.world.dev, fx.world.vocab, ten, 1);
  const auto base = evaluate(scorer, fx.imitation, fx.world.dev, fx.world.vocab, none, 1);
  CHECK(with.accuracy >= base.accuracy);
  ten.threads = 1;
  const auto again = evaluate(scorer, fx.imitation, fx.world.dev, fx.world.vocab, ten, 1);
  CHECK(again.accuracy == with.accuracy);
  for (std::size_t i = 0; i < with.records.size(); ++i) CHECK(again.records[i].knowledge == with.records[i].knowledge);

  const auto j = record_to_json(with.records[0], fx.world.dev.instances[0], fx.world.vocab);
  CHECK(j.contains("question"));
  CHECK(j.contains("confidence"));
  CHECK(j["knowledge"].size() == 11);
}
