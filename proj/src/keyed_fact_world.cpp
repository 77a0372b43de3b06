// SPDX-License-Identifier: Apache-2.0
#include "kintro/keyed_fact_world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kintro {
namespace {

const std::vector<std::string> kEntityNames = {
    "bear", "apple", "river", "stone", "cloud", "tiger", "lamp", "ship",
    "rose", "horse", "castle", "violin", "cactus", "falcon", "anchor", "comet",
    "lemon", "otter", "pearl", "tulip", "wagon", "zebra", "kettle", "maple"};

const std::vector<std::string> kAttributeNames = {
    "red", "blue", "green", "yellow", "black", "white", "pink", "gray",
    "orange", "purple", "brown", "silver", "gold", "teal", "ivory", "violet"};

const std::vector<std::string> kTemplates = {
    "what color is the {entity} ?",
    "which color does the {entity} have ?",
    "the {entity} is what color ?",
    "name the color of the {entity} ?"};

std::string name_at(const std::vector<std::string>& names, const char* prefix, std::size_t i) {
  return i < names.size() ? names[i] : std::string(prefix) + std::to_string(i);
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

TokenSeq fill(const Vocab& vocab, const std::string& pattern, const std::string& entity, const std::string& attribute) {
  TokenSeq out;
  for (const auto& w : split_words(pattern)) {
    if (w == "{entity}") out.push_back(vocab.id(entity));
    else if (w == "{attribute}") out.push_back(vocab.id(attribute));
    else out.push_back(vocab.id(w));
  }
  return out;
}

std::uint64_t hash_tokens(std::uint64_t h, std::span<const TokenId> toks) {
  for (TokenId t : toks) h = splitmix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) + 0x9e37ULL));
  return h;
}

Vocab build_vocab(const std::vector<std::string>& templates, const std::string& key_phrase,
                  const std::vector<std::string>& entities, const std::vector<std::string>& attributes,
                  std::size_t candidates) {
  std::vector<std::string> words;
  auto add = [&words](const std::string& w) {
    if (w == "{entity}" || w == "{attribute}") return;
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  };
  for (const auto& t : templates)
    for (const auto& w : split_words(t)) add(w);
  for (const auto& w : split_words(key_phrase)) add(w);
  for (std::size_t i = 0; i < candidates; ++i) add(Vocab::choice_label(i));
  for (const auto& e : entities) add(e);
  for (const auto& a : attributes) add(a);
  return Vocab(words);
}

}  // namespace

void WorldConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCategory::config, "world config: " + m); };
  if (entities < 2) fail("entity count must be at least 2");
  if (attributes < 2) fail("attribute count must be at least 2");
  if (candidates < 2) fail("candidate count must be at least 2");
  if (candidates > attributes) fail("candidate count exceeds attribute count");
  if (candidates > Vocab::kMaxChoices) fail("candidate count exceeds 26");
  if (train_per_entity < 1) fail("train_per_entity must be at least 1");
  if (!(delta > 0.0)) fail("delta must be positive");
  if (!(base_score + delta <= 0.0)) fail("base_score + delta must be a log-probability (<= 0)");
  if (!(eta_fraction > 0.0 && eta_fraction <= 1.0)) fail("eta_fraction must be in (0, 1]");
  if (!(fraction_wrong >= 0.0 && fraction_wrong <= 1.0)) fail("fraction_wrong must be in [0, 1]");
}

bool contains_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

bool KeyedFactScorer::naive_wrong(std::span<const TokenId> question) const {
  return uniform_open01(hash_tokens(splitmix64(params_.eta_seed), question)) < params_.fraction_wrong;
}

std::vector<double> KeyedFactScorer::answer_token_logprobs(std::span<const TokenId> prompt,
                                                           std::span<const TokenId> answer) const {
  const auto sep = std::find(prompt.begin(), prompt.end(), Vocab::kSep);
  const std::span<const TokenId> question(prompt.begin(), sep);
  const std::span<const TokenId> knowledge =
      sep == prompt.end() ? std::span<const TokenId>() : std::span<const TokenId>(sep + 1, prompt.end());

  std::optional<TokenId> entity;
  for (TokenId t : question)
    if (params_.fact_of.count(t)) {
      entity = t;
      break;
    }

  double score = 0.0;
  if (entity && answer.size() == 1 && answer[0] == params_.fact_of.at(*entity)) {
    score = params_.base_score;
    if (contains_subsequence(knowledge, params_.key_fact_of.at(*entity))) score += params_.delta;
  } else {
    const std::uint64_t hq = hash_tokens(splitmix64(params_.eta_seed), question);
    const double eta = params_.eta_cap * uniform_open01(hash_tokens(splitmix64(hq ^ 0xa5a5a5a5ULL), answer));
    score = uniform_open01(hq) < params_.fraction_wrong ? params_.base_score + eta : params_.base_score - eta;
  }
  return std::vector<double>(answer.size(), score);
}

TokenSeq KeyedFactWorld::key_fact(std::size_t entity) const {
  return fill(vocab, key_phrase, entities.at(entity), attributes.at(facts.at(entity)));
}

std::optional<std::size_t> KeyedFactWorld::entity_of(std::span<const TokenId> tokens) const {
  for (TokenId t : tokens) {
    const auto& word = vocab.token(t);
    auto it = std::find(entities.begin(), entities.end(), word);
    if (it != entities.end()) return static_cast<std::size_t>(it - entities.begin());
  }
  return std::nullopt;
}

bool KeyedFactWorld::contains_key_fact(std::span<const TokenId> knowledge, std::size_t entity) const {
  return contains_subsequence(knowledge, key_fact(entity));
}

OracleParams KeyedFactWorld::oracle_params() const {
  OracleParams p;
  for (std::size_t e = 0; e < entities.size(); ++e) {
    const TokenId et = vocab.id(entities[e]);
    p.fact_of[et] = vocab.id(attributes[facts[e]]);
    p.key_fact_of[et] = key_fact(e);
  }
  p.base_score = config.base_score;
  p.delta = config.delta;
  p.eta_cap = config.eta_fraction * config.delta;
  p.fraction_wrong = config.fraction_wrong;
  p.eta_seed = eta_seed;
  return p;
}

nlohmann::ordered_json KeyedFactWorld::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "kintro-world/1";
  j["config"] = {{"entities", config.entities},
                 {"attributes", config.attributes},
                 {"candidates", config.candidates},
                 {"train_per_entity", config.train_per_entity},
                 {"dev_per_entity", config.dev_per_entity},
                 {"delta", config.delta},
                 {"base_score", config.base_score},
                 {"eta_fraction", config.eta_fraction},
                 {"fraction_wrong", config.fraction_wrong}};
  j["entities"] = entities;
  j["attributes"] = attributes;
  nlohmann::ordered_json facts_json = nlohmann::ordered_json::object();
  for (std::size_t e = 0; e < entities.size(); ++e) facts_json[entities[e]] = attributes[facts[e]];
  j["facts"] = std::move(facts_json);
  j["key_phrase"] = key_phrase;
  j["question_templates"] = question_templates;
  j["delta"] = config.delta;
  j["eta_seed"] = eta_seed;
  j["vocab"] = vocab.tokens();
  return j;
}

KeyedFactWorld KeyedFactWorld::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "kintro-world/1")
      throw Error(ErrorCategory::data, "unsupported world format");
    KeyedFactWorld w;
    const auto& c = j.at("config");
    w.config.entities = c.at("entities").get<std::size_t>();
    w.config.attributes = c.at("attributes").get<std::size_t>();
    w.config.candidates = c.at("candidates").get<std::size_t>();
    w.config.train_per_entity = c.at("train_per_entity").get<std::size_t>();
    w.config.dev_per_entity = c.at("dev_per_entity").get<std::size_t>();
    w.config.delta = c.at("delta").get<double>();
    w.config.base_score = c.at("base_score").get<double>();
    w.config.eta_fraction = c.at("eta_fraction").get<double>();
    w.config.fraction_wrong = c.at("fraction_wrong").get<double>();
    w.config.validate();
    w.entities = j.at("entities").get<std::vector<std::string>>();
    w.attributes = j.at("attributes").get<std::vector<std::string>>();
    for (const auto& e : w.entities) {
      const auto a = j.at("facts").at(e).get<std::string>();
      auto it = std::find(w.attributes.begin(), w.attributes.end(), a);
      if (it == w.attributes.end()) throw Error(ErrorCategory::data, "fact for '" + e + "' names unknown attribute");
      w.facts.push_back(static_cast<std::size_t>(it - w.attributes.begin()));
    }
    w.key_phrase = j.at("key_phrase").get<std::string>();
    w.question_templates = j.at("question_templates").get<std::vector<std::string>>();
    w.eta_seed = j.at("eta_seed").get<std::uint64_t>();
    w.vocab = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    w.train = {"train", Split::train, {}};
    w.dev = {"dev", Split::dev, {}};
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::data, std::string("malformed world file: ") + e.what());
  }
}

KeyedFactWorld make_keyed_fact_world(const WorldConfig& config, Rng& rng) {
  config.validate();
  KeyedFactWorld w;
  w.config = config;
  for (std::size_t i = 0; i < config.entities; ++i) w.entities.push_back(name_at(kEntityNames, "entity", i));
  for (std::size_t i = 0; i < config.attributes; ++i) w.attributes.push_back(name_at(kAttributeNames, "attr", i));
  w.question_templates = kTemplates;
  w.vocab = build_vocab(w.question_templates, w.key_phrase, w.entities, w.attributes, config.candidates);

  std::uniform_int_distribution<std::size_t> pick_attr(0, config.attributes - 1);
  for (std::size_t e = 0; e < config.entities; ++e) w.facts.push_back(pick_attr(rng));
  w.eta_seed = rng();
  const KeyedFactScorer oracle = w.scorer();

  auto make_split = [&](Split split, std::size_t per_entity) {
    Dataset ds{split_name(split), split, {}};
    const std::size_t n = config.entities * per_entity;
    const auto wrong_count = static_cast<std::size_t>(std::llround(config.fraction_wrong * static_cast<double>(n)));
    std::vector<char> want_wrong(n, 0);
    std::fill(want_wrong.begin(), want_wrong.begin() + static_cast<std::ptrdiff_t>(wrong_count), 1);
    std::shuffle(want_wrong.begin(), want_wrong.end(), rng);

    std::uniform_int_distribution<std::size_t> pick_template(0, w.question_templates.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_slot(0, config.candidates - 1);
    for (std::size_t e = 0; e < config.entities; ++e) {
      std::vector<std::size_t> others;
      for (std::size_t a = 0; a < config.attributes; ++a)
        if (a != w.facts[e]) others.push_back(a);
      for (std::size_t j = 0; j < per_entity; ++j) {
        const bool target = want_wrong[e * per_entity + j] != 0;
        QAInstance inst;
        for (int attempt = 0;; ++attempt) {
          if (attempt > 100000)
            throw Error(ErrorCategory::config, "could not realize the requested naive-wrong pattern");
          inst = QAInstance{};
          inst.question = fill(w.vocab, w.question_templates[pick_template(rng)], w.entities[e], "");
          std::shuffle(others.begin(), others.end(), rng);
          for (std::size_t d = 0; d + 1 < config.candidates; ++d)
            inst.candidates.push_back({w.vocab.id(w.attributes[others[d]])});
          inst.gold = pick_slot(rng);
          inst.candidates.insert(inst.candidates.begin() + static_cast<std::ptrdiff_t>(inst.gold),
                                 TokenSeq{w.vocab.id(w.attributes[w.facts[e]])});
          if (oracle.naive_wrong(format_question(inst, w.vocab)) == target) break;
        }
        ds.instances.push_back(std::move(inst));
      }
    }
    return ds;
  };
  w.train = make_split(Split::train, config.train_per_entity);
  w.dev = make_split(Split::dev, config.dev_per_entity);
  return w;
}

}  // namespace kintro
