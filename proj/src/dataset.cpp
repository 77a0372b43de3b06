// SPDX-License-Identifier: Apache-2.0
#include "kintro/dataset.hpp"

#include <json.hpp>

#include <fstream>

namespace kintro {

void QAInstance::validate() const {
  if (question.empty()) throw Error(ErrorCategory::data, "question is empty");
  if (candidates.size() < 2)
    throw Error(ErrorCategory::data, "need at least 2 candidates, got " + std::to_string(candidates.size()));
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].empty()) throw Error(ErrorCategory::data, "candidate " + std::to_string(i) + " is empty");
  if (gold >= candidates.size())
    throw Error(ErrorCategory::data, "gold index " + std::to_string(gold) + " out of range for " +
                                         std::to_string(candidates.size()) + " candidates");
}

std::string split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw Error(ErrorCategory::config, "unknown split '" + std::string(name) + "' (train|dev|test)");
}

TokenSeq format_question(const QAInstance& instance, const Vocab& vocab) {
  if (instance.candidates.size() > Vocab::kMaxChoices)
    throw Error(ErrorCategory::precondition, "more than 26 candidates: label alphabet exhausted");
  TokenSeq out = instance.question;
  for (std::size_t i = 0; i < instance.candidates.size(); ++i) {
    out.push_back(vocab.id(Vocab::choice_label(i)));
    const auto& c = instance.candidates[i];
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

TokenSeq concat_prompt(std::span<const TokenId> question, std::span<const TokenId> knowledge) {
  TokenSeq out(question.begin(), question.end());
  if (knowledge.empty()) return out;
  out.push_back(Vocab::kSep);
  out.insert(out.end(), knowledge.begin(), knowledge.end());
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, const Vocab& vocab, Split split, std::string name) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io, "cannot open dataset: " + path.string());
  Dataset ds;
  ds.name = name.empty() ? path.stem().string() : std::move(name);
  ds.split = split;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (normalize_whitespace(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw Error(ErrorCategory::data, "expected a JSON object");
      if (!j.contains("question") || !j["question"].is_string())
        throw Error(ErrorCategory::data, "missing string field 'question'");
      if (!j.contains("choices") || !j["choices"].is_array())
        throw Error(ErrorCategory::data, "missing array field 'choices'");
      if (!j.contains("gold") || !j["gold"].is_number_integer())
        throw Error(ErrorCategory::data, "missing integer field 'gold'");

      QAInstance inst;
      inst.question = vocab.tokenize(j["question"].get<std::string>());
      for (const auto& c : j["choices"]) {
        if (!c.is_string()) throw Error(ErrorCategory::data, "choices must be strings");
        inst.candidates.push_back(vocab.tokenize(c.get<std::string>()));
      }
      const auto gold = j["gold"].get<long long>();
      if (gold < 0 || static_cast<std::size_t>(gold) >= inst.candidates.size())
        throw Error(ErrorCategory::data, "gold " + std::to_string(gold) + " out of range for " +
                                             std::to_string(inst.candidates.size()) + " choices");
      inst.gold = static_cast<std::size_t>(gold);
      inst.validate();
      ds.instances.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCategory::data, where + "malformed JSON: " + e.what());
    } catch (const Error& e) {
      throw Error(e.category(), where + e.what());
    }
  }
  if (ds.instances.empty()) throw Error(ErrorCategory::data, path.string() + ": no instances");
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset, const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::io, "cannot write dataset: " + path.string());
  for (const auto& inst : dataset.instances) {
    nlohmann::ordered_json j;
    j["question"] = vocab.detokenize(inst.question);
    auto choices = nlohmann::ordered_json::array();
    for (const auto& c : inst.candidates) choices.push_back(vocab.detokenize(c));
    j["choices"] = std::move(choices);
    j["gold"] = inst.gold;
    out << j.dump() << '\n';
  }
}

}  // namespace kintro
