#include <doctest.h>

#include "kintro/reward.hpp"
#include "test_scorers.hpp"

#include <cmath>

using namespace kintro;
using namespace kintro::testing;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

QAInstance three_way() { return {{5}, {{10}, {11}, {12}}, 0}; }

}  // namespace

TEST_CASE("margin is gold minus the best distractor") {
  CHECK(margin_from_scores(vec({1.0, 0.2, 0.5}), 0) == doctest::Approx(0.5));
  CHECK(margin_from_scores(vec({0.3, 0.3}), 1) == 0.0);
  const auto s = table_scorer({1.0, 0.2, 0.5}, {0, 0, 0}, 10);
  CHECK(margin(s, TokenSeq{5}, three_way().candidates, 0) == doctest::Approx(0.5));
  CHECK(margin(s, TokenSeq{5}, three_way().candidates, 2) == doctest::Approx(-0.5));
}

TEST_CASE("tanh margin reward") {
  // m(q k) = +0.5, m(q) = -0.5
  const auto s = table_scorer({0.0, 0.5, -1.0}, {0.5, 0.0, -1.0}, 10);
  const auto inst = three_way();
  const double r = shaped_reward(s, TokenSeq{5}, inst, TokenSeq{7}, RewardVariant::tanh_margin);
  CHECK(r == doctest::Approx(std::tanh(0.5)).epsilon(1e-12));
  CHECK(r == doctest::Approx(0.462117).epsilon(1e-6));
  CHECK(shaped_reward(s, TokenSeq{5}, inst, TokenSeq{}, RewardVariant::tanh_margin) == 0.0);
}

TEST_CASE("the other shaped variants") {
  const Vector with_k = vec({0.5, 0.0, -1.0}), without = vec({0.0, 0.5, -1.0});
  const Vector pk = with_k.array().exp() / with_k.array().exp().sum();
  const Vector p0 = without.array().exp() / without.array().exp().sum();
  CHECK(shaped_from_scores(with_k, without, 0, RewardVariant::prob_only) == doctest::Approx(pk(0)));
  CHECK(shaped_from_scores(with_k, without, 0, RewardVariant::prob_diff) == doctest::Approx(pk(0) - p0(0)));
  CHECK(shaped_from_scores(with_k, without, 0, RewardVariant::score_diff) == doctest::Approx(0.5));
  CHECK(shaped_from_scores(with_k, without, 0, RewardVariant::hard_activation) == 1.0);
  CHECK(shaped_from_scores(without, with_k, 0, RewardVariant::hard_activation) == -1.0);
  CHECK(shaped_from_scores(with_k, with_k, 0, RewardVariant::hard_activation) == 0.0);
  // exact tie without knowledge: sgn(0) = 0 so a fix earns one half
  CHECK(shaped_from_scores(with_k, vec({0.0, 0.0, -1.0}), 0, RewardVariant::hard_activation) == 0.5);
  for (auto v : {RewardVariant::tanh_margin, RewardVariant::prob_only, RewardVariant::prob_diff,
                 RewardVariant::score_diff, RewardVariant::hard_activation})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("nope"), Error);
}

TEST_CASE("kl penalty") {
  RewardSpec spec;
  spec.beta = 0.2;
  CHECK(kl_penalized(spec, 0.5, -3.0, -4.0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(kl_penalized(spec, 0.5, -3.0, -3.0) == 0.5);
  spec.beta = 0.0;
  CHECK(kl_penalized(spec, 0.5, -1.0, -9.0) == 0.5);
}

TEST_CASE("terminal assignment") {
  CHECK(terminal_assign(0.3, 3) == std::vector<double>{0.0, 0.0, 0.3});
  CHECK(terminal_assign(0.3, 1) == std::vector<double>{0.3});
  CHECK_THROWS_AS(terminal_assign(0.3, 0), Error);
  for (std::size_t T = 1; T < 10; ++T) {
    const auto v = terminal_assign(-1.25, T);
    double sum = 0.0;
    for (double x : v) sum += x;
    CHECK(sum == -1.25);
  }
}

TEST_CASE("population statistics and normalization") {
  const std::vector<double> xs{1.0, 2.0, 3.0};
  const NormStats st = population_stats(xs);
  CHECK(st.mean == doctest::Approx(2.0));
  CHECK(st.stddev == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(st.stddev == doctest::Approx(0.816497).epsilon(1e-6));
  try {
    population_stats(std::vector<double>{0.4, 0.4, 0.4});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::numeric);
  }

  RewardSpec spec;
  CHECK_THROWS_AS(normalize(spec, 1.0), Error);
  spec.norm = st;
  CHECK(normalize(spec, st.mean) == 0.0);
  CHECK(normalize(spec, st.mean + st.stddev) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> z;
  for (double x : xs) z.push_back(normalize(spec, x));
  const NormStats zs = population_stats(z);
  CHECK(std::abs(zs.mean) < 1e-12);
  CHECK(std::abs(zs.stddev - 1.0) < 1e-12);
}

TEST_CASE("reward spec validation") {
  RewardSpec spec;
  spec.beta = -1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.beta = 0.1;
  spec.norm = NormStats{0.0, 0.0};
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK(parse_kl_mode(kl_mode_name(KlMode::per_token)) == KlMode::per_token);
}
