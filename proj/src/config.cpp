// SPDX-License-Identifier: Apache-2.0
#include "kintro/config.hpp"

#include <functional>
#include <map>

namespace kintro {
namespace {

using json = nlohmann::json;

struct Entry {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T convert(const std::string& key, const json& v) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "true" || s == "1" || s == "on") return true;
        if (s == "false" || s == "0" || s == "off") return false;
        throw Error(ErrorCategory::config, "expected a boolean");
      }
      if (!v.is_boolean()) throw Error(ErrorCategory::config, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw Error(ErrorCategory::config, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (v.is_string()) return static_cast<T>(std::stod(v.get<std::string>()));
      if (!v.is_number()) throw Error(ErrorCategory::config, "expected a number");
      return v.get<T>();
    } else {
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s.empty() || s[0] == '-') throw Error(ErrorCategory::config, "expected a non-negative integer");
        std::size_t used = 0;
        const auto x = std::stoull(s, &used);
        if (used != s.size()) throw Error(ErrorCategory::config, "expected a non-negative integer");
        return static_cast<T>(x);
      }
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        throw Error(ErrorCategory::config, "expected a non-negative integer");
      return v.get<T>();
    }
  } catch (const Error& e) {
    throw Error(ErrorCategory::config, "config key '" + key + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCategory::config, "config key '" + key + "': bad value (" + e.what() + ")");
  }
}

template <typename T, typename Access>
Entry field(std::string key, Access access) {
  Entry e;
  e.key = key;
  e.get = [access](const RunConfig& c) { return json(access(const_cast<RunConfig&>(c))); };
  e.set = [access, key](RunConfig& c, const json& v) { access(c) = convert<T>(key, v); };
  return e;
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> r;
    r.push_back(field<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; }));
    r.push_back(field<std::size_t>("threads", [](RunConfig& c) -> auto& { return c.threads; }));

    r.push_back(field<std::size_t>("world.entities", [](RunConfig& c) -> auto& { return c.world.entities; }));
    r.push_back(field<std::size_t>("world.attributes", [](RunConfig& c) -> auto& { return c.world.attributes; }));
    r.push_back(field<std::size_t>("world.candidates", [](RunConfig& c) -> auto& { return c.world.candidates; }));
    r.push_back(field<std::size_t>("world.train_per_entity",
                                   [](RunConfig& c) -> auto& { return c.world.train_per_entity; }));
    r.push_back(field<std::size_t>("world.dev_per_entity",
                                   [](RunConfig& c) -> auto& { return c.world.dev_per_entity; }));
    r.push_back(field<double>("world.delta", [](RunConfig& c) -> auto& { return c.world.delta; }));
    r.push_back(field<double>("world.base_score", [](RunConfig& c) -> auto& { return c.world.base_score; }));
    r.push_back(field<double>("world.eta_fraction", [](RunConfig& c) -> auto& { return c.world.eta_fraction; }));
    r.push_back(field<double>("world.fraction_wrong",
                              [](RunConfig& c) -> auto& { return c.world.fraction_wrong; }));

    r.push_back(field<std::size_t>("model.embed_dim", [](RunConfig& c) -> auto& { return c.embed_dim; }));
    r.push_back(field<std::size_t>("model.hidden_dim", [](RunConfig& c) -> auto& { return c.hidden_dim; }));
    r.push_back(field<double>("model.init_scale", [](RunConfig& c) -> auto& { return c.init_scale; }));
    r.push_back(field<std::size_t>("model.max_input_len", [](RunConfig& c) -> auto& { return c.max_input_len; }));
    r.push_back(field<std::size_t>("model.max_output_len", [](RunConfig& c) -> auto& { return c.max_output_len; }));

    r.push_back(field<std::size_t>("silver.per_question",
                                   [](RunConfig& c) -> auto& { return c.silver_per_question; }));
    r.push_back(field<double>("silver.noise", [](RunConfig& c) -> auto& { return c.silver_noise; }));

    r.push_back(field<std::size_t>("imitation.batch_size",
                                   [](RunConfig& c) -> auto& { return c.imitation.batch_size; }));
    r.push_back(field<std::size_t>("imitation.steps", [](RunConfig& c) -> auto& { return c.imitation.steps; }));
    r.push_back(field<double>("imitation.learning_rate",
                              [](RunConfig& c) -> auto& { return c.imitation.learning_rate; }));
    r.push_back(field<double>("imitation.heldout_fraction",
                              [](RunConfig& c) -> auto& { return c.imitation.heldout_fraction; }));
    r.push_back(field<double>("imitation.max_grad_norm",
                              [](RunConfig& c) -> auto& { return c.imitation.max_grad_norm; }));

    r.push_back(field<double>("ppo.alpha", [](RunConfig& c) -> auto& { return c.ppo.alpha; }));
    r.push_back(field<double>("ppo.gamma", [](RunConfig& c) -> auto& { return c.ppo.gamma; }));
    r.push_back(field<double>("ppo.lambda", [](RunConfig& c) -> auto& { return c.ppo.lambda; }));
    r.push_back(field<double>("ppo.epsilon", [](RunConfig& c) -> auto& { return c.ppo.epsilon; }));
    r.push_back(field<std::size_t>("ppo.lag_interval", [](RunConfig& c) -> auto& { return c.ppo.lag_interval; }));
    r.push_back(field<std::size_t>("ppo.batch_size", [](RunConfig& c) -> auto& { return c.ppo.batch_size; }));
    r.push_back(field<std::size_t>("ppo.total_steps", [](RunConfig& c) -> auto& { return c.ppo.total_steps; }));
    r.push_back(field<double>("ppo.learning_rate", [](RunConfig& c) -> auto& { return c.ppo.learning_rate; }));
    r.push_back(field<double>("ppo.temperature", [](RunConfig& c) -> auto& { return c.ppo.temperature; }));
    r.push_back(field<std::size_t>("ppo.max_knowledge_len",
                                   [](RunConfig& c) -> auto& { return c.ppo.max_knowledge_len; }));
    r.push_back(field<bool>("ppo.whiten_advantages",
                            [](RunConfig& c) -> auto& { return c.ppo.whiten_advantages; }));
    r.push_back(field<bool>("ppo.tempered_ratios", [](RunConfig& c) -> auto& { return c.ppo.tempered_ratios; }));
    r.push_back(field<std::size_t>("ppo.eval_interval", [](RunConfig& c) -> auto& { return c.ppo.eval_interval; }));
    r.push_back(field<double>("ppo.max_grad_norm", [](RunConfig& c) -> auto& { return c.ppo.max_grad_norm; }));

    {
      Entry e;
      e.key = "reward.variant";
      e.get = [](const RunConfig& c) { return json(variant_name(c.reward_variant)); };
      e.set = [](RunConfig& c, const json& v) { c.reward_variant = parse_variant(convert<std::string>("reward.variant", v)); };
      r.push_back(e);
    }
    r.push_back(field<double>("reward.beta", [](RunConfig& c) -> auto& { return c.reward_beta; }));
    r.push_back(field<bool>("reward.normalize", [](RunConfig& c) -> auto& { return c.reward_normalize; }));
    {
      Entry e;
      e.key = "reward.kl_mode";
      e.get = [](const RunConfig& c) { return json(kl_mode_name(c.reward_kl_mode)); };
      e.set = [](RunConfig& c, const json& v) { c.reward_kl_mode = parse_kl_mode(convert<std::string>("reward.kl_mode", v)); };
      r.push_back(e);
    }

    r.push_back(field<std::size_t>("inference.knowledge_per_question",
                                   [](RunConfig& c) -> auto& { return c.knowledge_per_question; }));
    r.push_back(field<double>("inference.top_p", [](RunConfig& c) -> auto& { return c.top_p; }));
    return r;
  }();
  return entries;
}

const Entry& find_entry(std::string_view key) {
  for (const auto& e : registry())
    if (e.key == key) return e;
  throw Error(ErrorCategory::config, "unknown config key '" + std::string(key) + "'");
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) flatten(*it, key, out);
    else out.emplace_back(key, *it);
  }
}

}  // namespace

ModelShape RunConfig::policy_shape(std::size_t vocab_size) const {
  ModelShape s;
  s.vocab_size = vocab_size;
  s.embed_dim = embed_dim;
  s.hidden_dim = hidden_dim;
  s.head = HeadKind::token_distribution;
  s.max_input_len = max_input_len;
  s.max_output_len = max_output_len;
  return s;
}

ModelShape RunConfig::value_shape(std::size_t vocab_size) const {
  ModelShape s = policy_shape(vocab_size);
  s.head = HeadKind::scalar_value;
  return s;
}

RewardSpec RunConfig::reward_spec() const {
  RewardSpec r;
  r.variant = reward_variant;
  r.beta = reward_beta;
  r.kl_mode = reward_kl_mode;
  return r;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.knowledge_per_question = knowledge_per_question;
  o.top_p = top_p;
  o.max_len = ppo.max_knowledge_len;
  o.threads = threads;
  return o;
}

void RunConfig::validate() const {
  world.validate();
  imitation.validate();
  ppo.validate();
  reward_spec().validate();
  if (embed_dim == 0 || hidden_dim == 0) throw Error(ErrorCategory::config, "model widths must be positive");
  if (ppo.max_knowledge_len > max_output_len)
    throw Error(ErrorCategory::config, "ppo.max_knowledge_len exceeds model.max_output_len");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCategory::config, "inference.top_p must be in (0, 1]");
  if (!(silver_noise >= 0.0 && silver_noise <= 1.0)) throw Error(ErrorCategory::config, "silver.noise must be in [0, 1]");
  if (silver_per_question < 1) throw Error(ErrorCategory::config, "silver.per_question must be at least 1");
}

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  if (name == "full") {
    c.preset = "full";
    return c;
  }
  if (name == "tiny") {
    c.preset = "tiny";
    c.imitation.steps = 600;
    c.imitation.learning_rate = 1e-2;
    c.ppo.batch_size = 32;
    c.ppo.total_steps = 400;
    c.ppo.learning_rate = 3e-4;
    c.ppo.eval_interval = 5;
    return c;
  }
  throw Error(ErrorCategory::config, "unknown preset '" + std::string(name) + "' (full|tiny)");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys{"preset"};
  for (const auto& e : registry()) keys.push_back(e.key);
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, const std::string& value) {
  if (key == "preset") {
    config = preset_config(value);
    return;
  }
  find_entry(key).set(config, json(value));
}

nlohmann::ordered_json config_to_json(const RunConfig& config) {
  nlohmann::ordered_json j;
  j["preset"] = config.preset;
  for (const auto& e : registry()) j[e.key] = e.get(config);
  return j;
}

void apply_config_json(RunConfig& config, const json& j) {
  if (!j.is_object()) throw Error(ErrorCategory::config, "config must be a JSON object");
  std::vector<std::pair<std::string, json>> flat;
  flatten(j, "", flat);
  for (const auto& [k, v] : flat)
    if (k == "preset") config = preset_config(convert<std::string>("preset", v));
  for (const auto& [k, v] : flat)
    if (k != "preset") find_entry(k).set(config, v);
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  apply_config_json(c, j);
  return c;
}

}  // namespace kintro
