#pragma once

#include "kintro/config.hpp"
#include "kintro/imitation.hpp"
#include "kintro/keyed_fact_world.hpp"

namespace kintro::testing {

/// Default keyed-fact world with a briefly trained imitation policy. Built
/// once per test process.
struct TrainedFixture {
  RunConfig config;
  KeyedFactWorld world;
  std::vector<SilverPair> silver;
  SequenceModel initial;
  SequenceModel imitation;
};

inline const TrainedFixture& trained_fixture() {
  static const TrainedFixture fx = [] {
    TrainedFixture f;
    f.config = preset_config("tiny");
    Rng wr = make_rng(1, {1});
    f.world = make_keyed_fact_world(f.config.world, wr);
    Rng sr = make_rng(1, {2});
    f.silver = generate_silver(f.world, f.config.silver_per_question, f.config.silver_noise, sr);
    Rng ir = make_rng(1, {3});
    f.initial = SequenceModel::random(f.config.policy_shape(f.world.vocab.size()), f.world.vocab.hash(), ir);
    ImitationConfig ic = f.config.imitation;
    f.imitation = train_imitation(ic, f.initial, f.silver, 7).policy;
    return f;
  }();
  return fx;
}

}  // namespace kintro::testing
