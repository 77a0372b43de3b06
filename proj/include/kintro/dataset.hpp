// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/types.hpp"
#include "kintro/vocab.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kintro {

/// A multiple-choice question: x = (q, A, a*).
struct QAInstance {
  TokenSeq question;
  std::vector<TokenSeq> candidates;
  std::size_t gold = 0;

  /// Throws Error(data) unless the question is non-empty, there are at least
  /// two non-empty candidates and gold indexes one of them.
  void validate() const;
};

enum class Split { train, dev, test };

std::string split_name(Split split);
Split parse_split(std::string_view name);

struct Dataset {
  std::string name;
  Split split = Split::train;
  std::vector<QAInstance> instances;
};

/// Question tokens, then "(A)" a_0 "(B)" a_1 ... in candidate order.
TokenSeq format_question(const QAInstance& instance, const Vocab& vocab);

/// q, the separator, then k. Empty k returns q unchanged.
TokenSeq concat_prompt(std::span<const TokenId> question, std::span<const TokenId> knowledge);

/// Reads one JSON object per line: {"question": str, "choices": [str], "gold": int}.
/// Unknown fields are ignored and blank lines skipped. Errors carry the
/// 1-based line number.
Dataset load_dataset(const std::filesystem::path& path, const Vocab& vocab, Split split,
                     std::string name = {});

void write_dataset(const std::filesystem::path& path, const Dataset& dataset, const Vocab& vocab);

}  // namespace kintro
