// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/config.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace kintro {

/// File names inside a run directory.
struct RunPaths {
  explicit RunPaths(std::filesystem::path root);

  std::filesystem::path dir;
  std::filesystem::path config;
  std::filesystem::path world;
  std::filesystem::path train;
  std::filesystem::path dev;
  std::filesystem::path silver;
  std::filesystem::path policy_imit;
  std::filesystem::path imitation_log;
  std::filesystem::path policy_best;
  std::filesystem::path policy_final;
  std::filesystem::path value_final;
  std::filesystem::path ppo_metrics;
  std::filesystem::path ppo_manifest;

  std::filesystem::path eval_records(Split split) const;
  std::filesystem::path eval_summary(Split split) const;
};

/// Throws Error(precondition) naming the artifact and the command producing it.
void require_artifact(const std::filesystem::path& path, std::string_view producer);

/// Reads world.json plus the train/dev JSONL files.
KeyedFactWorld load_world(const RunPaths& paths);

/// Writes the world, its datasets, silver knowledge and the resolved config.
/// An existing non-empty directory is refused unless `force` is set.
void make_synth(const RunConfig& config, const std::filesystem::path& dir, bool force);

/// Stage I from random initialization; writes policy_imit.ckpt and the log.
ImitationResult run_imitate(const RunConfig& config, const std::filesystem::path& dir);

struct PPORunOptions {
  /// Start Stage II from a random policy instead of policy_imit.ckpt; the
  /// random policy is then also the KL reference.
  bool skip_imitation = false;
  /// Write checkpoints, metrics and manifest (the acceptance runs turn this on too).
  bool write_outputs = true;
};

struct PPORunSummary {
  PPOResult result;
  std::optional<NormStats> norm;
  std::uint64_t scorer_hash = 0;
};

PPORunSummary run_ppo(const RunConfig& config, const std::filesystem::path& dir, const PPORunOptions& options = {});

struct EvalRun {
  EvalResult result;
  std::filesystem::path checkpoint;
};

/// Knowledge-prompted evaluation on `split`; an empty checkpoint path means
/// policy_best.ckpt. Writes per-instance records and a summary next to it.
EvalRun run_eval(const RunConfig& config, const std::filesystem::path& dir, const std::filesystem::path& checkpoint,
                 Split split);

/// Human-readable K(q), confidence matrix and both argmaxes for one instance.
std::string run_introspect(const RunConfig& config, const std::filesystem::path& dir,
                           const std::filesystem::path& checkpoint, Split split, std::size_t index);

}  // namespace kintro
