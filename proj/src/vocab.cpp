// SPDX-License-Identifier: Apache-2.0
#include "kintro/vocab.hpp"

#include <array>
#include <sstream>

namespace kintro {
namespace {

constexpr std::array<std::string_view, Vocab::kReserved> kReservedTokens = {
    "<pad>", "<eos>", "<sep>", "<empty>"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

Vocab::Vocab() {
  for (auto t : kReservedTokens) append(std::string(t));
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
  for (const auto& w : words) {
    if (w.empty()) throw Error(ErrorCategory::data, "vocabulary word must be non-empty");
    for (char c : w)
      if (is_space(c)) throw Error(ErrorCategory::data, "vocabulary word contains whitespace: '" + w + "'");
    if (index_.count(w)) throw Error(ErrorCategory::data, "duplicate vocabulary word: '" + w + "'");
    append(w);
  }
}

Vocab Vocab::from_tokens(const std::vector<std::string>& all_tokens) {
  if (all_tokens.size() < kReserved)
    throw Error(ErrorCategory::data, "vocabulary is missing its reserved tokens");
  for (std::size_t i = 0; i < kReserved; ++i)
    if (all_tokens[i] != kReservedTokens[i])
      throw Error(ErrorCategory::data, "vocabulary reserved token " + std::to_string(i) + " is '" +
                                           all_tokens[i] + "'");
  return Vocab(std::vector<std::string>(all_tokens.begin() + kReserved, all_tokens.end()));
}

void Vocab::append(std::string word) {
  index_.emplace(word, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(word));
}

std::optional<TokenId> Vocab::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id(std::string_view word) const {
  if (auto found = find(word)) return *found;
  throw Error(ErrorCategory::data, "out-of-vocabulary token: '" + std::string(word) + "'");
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error(ErrorCategory::data, "token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSeq Vocab::tokenize(std::string_view text) const {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.push_back(id(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

std::string Vocab::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (char c : t) mix(static_cast<unsigned char>(c));
    mix(0);
  }
  return h;
}

std::string Vocab::choice_label(std::size_t index) {
  if (index >= kMaxChoices)
    throw Error(ErrorCategory::precondition,
                "choice label alphabet exhausted at index " + std::to_string(index));
  return std::string("(") + static_cast<char>('A' + index) + ")";
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending = false;
  for (char c : text) {
    if (is_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

}  // namespace kintro
