// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/imitation.hpp"
#include "kintro/inference.hpp"
#include "kintro/keyed_fact_world.hpp"
#include "kintro/ppo.hpp"
#include "kintro/reward.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace kintro {

/// Every tunable of a run. Defaults describe the full-scale configuration
/// ("full" preset); the "tiny" preset shrinks the run to a
/// few minutes on one core.
struct RunConfig {
  std::string preset = "full";
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  WorldConfig world;

  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  double init_scale = 1.0;
  std::size_t max_input_len = 256;
  std::size_t max_output_len = 32;

  std::size_t silver_per_question = 20;
  double silver_noise = 0.2;

  ImitationConfig imitation;
  PPOConfig ppo;

  RewardVariant reward_variant = RewardVariant::tanh_margin;
  double reward_beta = 0.2;
  bool reward_normalize = true;
  KlMode reward_kl_mode = KlMode::sequence;

  std::size_t knowledge_per_question = 10;
  double top_p = 0.5;

  ModelShape policy_shape(std::size_t vocab_size) const;
  ModelShape value_shape(std::size_t vocab_size) const;
  RewardSpec reward_spec() const;
  EvalOptions eval_options() const;
  void validate() const;
};

/// Resets `config` to the named preset ("full" or "tiny").
RunConfig preset_config(std::string_view name);

/// All accepted keys, e.g. "ppo.alpha".
std::vector<std::string> config_keys();

/// Sets one key from its textual value; unknown keys and bad values throw
/// Error(config). Setting "preset" resets every other key.
void set_config_value(RunConfig& config, std::string_view key, const std::string& value);

/// Flat {"key": value} object covering every key.
nlohmann::ordered_json config_to_json(const RunConfig& config);

/// Accepts flat ("ppo.alpha") or nested ({"ppo": {"alpha": ...}}) objects.
/// A "preset" key is applied before the others.
RunConfig config_from_json(const nlohmann::json& j);
void apply_config_json(RunConfig& config, const nlohmann::json& j);

}  // namespace kintro
