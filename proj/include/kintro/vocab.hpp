// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kintro {

/// Closed word-level vocabulary. Ids 0..3 are reserved and identical in every
/// vocabulary; user words follow in construction order.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kEos = 1;
  /// Separator placed between a question and its knowledge ("q \n k").
  static constexpr TokenId kSep = 2;
  /// Display token for the empty knowledge string. Empty knowledge itself is
  /// the empty token sequence; this id is only used when printing it.
  static constexpr TokenId kEmpty = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab();
  /// Reserved tokens followed by `words`. Words must be distinct, non-empty,
  /// free of whitespace, and must not collide with a reserved token.
  explicit Vocab(const std::vector<std::string>& words);

  /// Rebuilds from the full token list (including the reserved prefix), as
  /// written by tokens().
  static Vocab from_tokens(const std::vector<std::string>& all_tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> find(std::string_view word) const;
  /// Throws Error(data) naming the token when it is out of vocabulary.
  TokenId id(std::string_view word) const;
  const std::string& token(TokenId id) const;

  /// Whitespace split, each piece looked up with an OOV error.
  TokenSeq tokenize(std::string_view text) const;
  /// Tokens joined by single spaces.
  std::string detokenize(std::span<const TokenId> ids) const;

  /// FNV-1a over the token list; identifies the vocabulary in checkpoints.
  std::uint64_t hash() const;

  /// "(A)", "(B)", ... for i < 26.
  static std::string choice_label(std::size_t index);
  static constexpr std::size_t kMaxChoices = 26;

 private:
  void append(std::string word);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Collapses runs of whitespace into single spaces and trims the ends.
std::string normalize_whitespace(std::string_view text);

}  // namespace kintro
