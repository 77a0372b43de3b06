// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/sequence_model.hpp"

#include <filesystem>
#include <string>

namespace kintro {

/// Checkpoint file layout (all integers and doubles little-endian):
///
///   bytes 0..7   magic "KINTROCK"
///   u32          format version (1)
///   u32          layout id (head kind)
///   u64          vocab size, embed width, hidden width, max input len, max output len
///   u64          vocabulary hash
///   u64          parameter count
///   f64[count]   parameters in the SequenceModel flat layout
constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const SequenceModel& model);
SequenceModel decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model);
SequenceModel load_checkpoint(const std::filesystem::path& path);

/// Loads and checks that the checkpoint was written for `vocab_hash`.
SequenceModel load_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash);

}  // namespace kintro
