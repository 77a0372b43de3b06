// SPDX-License-Identifier: Apache-2.0
#include "kintro/pipeline.hpp"

#include "kintro/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace kintro {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Stream tags keep the randomness of each stage independent of the others.
constexpr std::uint64_t kWorldStream = 0x574f524cULL;
constexpr std::uint64_t kSilverStream = 0x53494c56ULL;
constexpr std::uint64_t kInitStream = 0x494e4954ULL;
constexpr std::uint64_t kImitStream = 0x494d4954ULL;
constexpr std::uint64_t kNormStream = 0x4e53544bULL;
constexpr std::uint64_t kPPOStream = 0x50504f21ULL;
constexpr std::uint64_t kEvalStream = 0x4556414cULL;
constexpr std::uint64_t kScratchStream = 0x53435231ULL;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCategory::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCategory::io, "write to '" + path.string() + "' failed");
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::data, path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

SequenceModel initial_policy(const RunConfig& config, const KeyedFactWorld& world) {
  Rng rng = make_rng(config.seed, {kInitStream});
  return SequenceModel::random(config.policy_shape(world.vocab.size()), world.vocab.hash(), rng, config.init_scale);
}

// Value model: same body as the policy it accompanies, fresh zero head.
SequenceModel initial_value(const RunConfig& config, const KeyedFactWorld& world, const SequenceModel& policy) {
  SequenceModel value(config.value_shape(world.vocab.size()), world.vocab.hash());
  value.copy_body_from(policy);
  return value;
}

SequenceModel load_policy(const fs::path& path, const KeyedFactWorld& world, std::string_view producer) {
  require_artifact(path, producer);
  SequenceModel m = load_checkpoint(path, world.vocab.hash());
  if (m.shape().head != HeadKind::token_distribution)
    throw Error(ErrorCategory::data, "'" + path.string() + "' is not a policy checkpoint");
  return m;
}

}  // namespace

RunPaths::RunPaths(fs::path root)
    : dir(std::move(root)),
      config(dir / "config.json"),
      world(dir / "world.json"),
      train(dir / "train.jsonl"),
      dev(dir / "dev.jsonl"),
      silver(dir / "silver.jsonl"),
      policy_imit(dir / "policy_imit.ckpt"),
      imitation_log(dir / "imitation_log.csv"),
      policy_best(dir / "policy_best.ckpt"),
      policy_final(dir / "policy_final.ckpt"),
      value_final(dir / "value_final.ckpt"),
      ppo_metrics(dir / "ppo_metrics.csv"),
      ppo_manifest(dir / "ppo_manifest.json") {}

fs::path RunPaths::eval_records(Split split) const { return dir / ("eval_" + split_name(split) + ".jsonl"); }
fs::path RunPaths::eval_summary(Split split) const { return dir / ("eval_" + split_name(split) + "_summary.json"); }

void require_artifact(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path))
    throw Error(ErrorCategory::precondition,
                "missing artifact '" + path.string() + "' (run '" + std::string(producer) + "' first)");
}

KeyedFactWorld load_world(const RunPaths& paths) {
  require_artifact(paths.world, "make-synth");
  require_artifact(paths.train, "make-synth");
  require_artifact(paths.dev, "make-synth");
  KeyedFactWorld world = KeyedFactWorld::from_json(read_json(paths.world));
  world.train = load_dataset(paths.train, world.vocab, Split::train, "keyed-fact");
  world.dev = load_dataset(paths.dev, world.vocab, Split::dev, "keyed-fact");
  return world;
}

void make_synth(const RunConfig& config, const fs::path& dir, bool force) {
  config.validate();
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw Error(ErrorCategory::io, "'" + dir.string() + "' exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw Error(ErrorCategory::precondition,
                "output directory '" + dir.string() + "' is not empty (pass --force to overwrite)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCategory::io, "cannot create '" + dir.string() + "': " + ec.message());

  RunPaths paths(dir);
  Rng world_rng = make_rng(config.seed, {kWorldStream});
  KeyedFactWorld world = make_keyed_fact_world(config.world, world_rng);
  Rng silver_rng = make_rng(config.seed, {kSilverStream});
  const auto silver = generate_silver(world, config.silver_per_question, config.silver_noise, silver_rng);

  write_text(paths.config, config_to_json(config).dump(2) + "\n");
  write_text(paths.world, world.to_json().dump(2) + "\n");
  write_dataset(paths.train, world.train, world.vocab);
  write_dataset(paths.dev, world.dev, world.vocab);
  write_silver(paths.silver, silver, world.vocab);
}

ImitationResult run_imitate(const RunConfig& config, const fs::path& dir) {
  config.validate();
  RunPaths paths(dir);
  const KeyedFactWorld world = load_world(paths);
  require_artifact(paths.silver, "make-synth");
  const auto silver = load_silver(paths.silver, world.vocab);

  ImitationConfig ic = config.imitation;
  ic.threads = config.threads;
  ImitationResult res =
      train_imitation(ic, initial_policy(config, world), silver, derive_seed(config.seed, {kImitStream}));
  save_checkpoint(paths.policy_imit, res.policy);
  write_text(paths.imitation_log, imitation_log_csv(res.log));
  return res;
}

PPORunSummary run_ppo(const RunConfig& config, const fs::path& dir, const PPORunOptions& options) {
  config.validate();
  RunPaths paths(dir);
  const KeyedFactWorld world = load_world(paths);
  const KeyedFactScorer scorer = world.scorer();

  SequenceModel start;
  if (options.skip_imitation) {
    Rng rng = make_rng(config.seed, {kScratchStream});
    start = SequenceModel::random(config.policy_shape(world.vocab.size()), world.vocab.hash(), rng,
                                  config.init_scale);
  } else {
    start = load_policy(paths.policy_imit, world, "imitate");
  }
  const ParamSnapshot reference = snapshot(start);

  RewardSpec reward = config.reward_spec();
  PPORunSummary summary;
  if (config.reward_normalize) {
    reward.norm = estimate_norm_stats(start, scorer, world.train.instances, world.vocab, reward.variant,
                                      DecodeMode::tempered(config.ppo.temperature), config.ppo.max_knowledge_len,
                                      derive_seed(config.seed, {kNormStream}));
    summary.norm = reward.norm;
  }

  PPOConfig pc = config.ppo;
  pc.threads = config.threads;
  SequenceModel value = initial_value(config, world, start);
  summary.result = train_ppo(pc, reward, start, std::move(value), reference, scorer, {world.train}, {world.dev},
                             world.vocab, derive_seed(config.seed, {kPPOStream}));
  summary.scorer_hash = summary.result.scorer_hash_after;

  if (options.write_outputs) {
    const auto& r = summary.result;
    save_checkpoint(paths.policy_best, r.best_policy);
    save_checkpoint(paths.policy_final, r.final_policy);
    save_checkpoint(paths.value_final, r.final_value);
    write_text(paths.ppo_metrics, metrics_csv(r.metrics));

    nlohmann::ordered_json m;
    m["config"] = config_to_json(config);
    m["seed"] = config.seed;
    m["start"] = options.skip_imitation ? "random" : paths.policy_imit.string();
    if (summary.norm) {
      m["reward_mean"] = summary.norm->mean;
      m["reward_std"] = summary.norm->stddev;
    } else {
      m["reward_mean"] = nullptr;
      m["reward_std"] = nullptr;
    }
    m["scorer"] = scorer.name();
    m["scorer_hash_before"] = hex64(r.scorer_hash_before);
    m["scorer_hash_after"] = hex64(r.scorer_hash_after);
    m["episodes"] = r.episodes;
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (const auto& h : r.history) hist.push_back({{"step", h.step}, {"accuracy", h.accuracy}});
    m["validation"] = hist;
    m["best_step"] = r.history.empty() ? 0 : r.history[r.best_index].step;
    m["best_checkpoint"] = paths.policy_best.string();
    write_text(paths.ppo_manifest, m.dump(2) + "\n");
  }
  return summary;
}

EvalRun run_eval(const RunConfig& config, const fs::path& dir, const fs::path& checkpoint, Split split) {
  config.validate();
  RunPaths paths(dir);
  const KeyedFactWorld world = load_world(paths);
  EvalRun run;
  run.checkpoint = checkpoint.empty() ? paths.policy_best : checkpoint;
  const SequenceModel policy = load_policy(run.checkpoint, world, checkpoint.empty() ? "ppo" : "imitate or ppo");
  const Dataset& data = split == Split::train ? world.train : world.dev;
  const KeyedFactScorer scorer = world.scorer();
  const EvalOptions opts = config.eval_options();
  const std::uint64_t seed = derive_seed(config.seed, {kEvalStream});
  run.result = evaluate(scorer, policy, data, world.vocab, opts, seed);

  std::ostringstream records;
  for (const auto& rec : run.result.records)
    records << record_to_json(rec, data.instances[rec.index], world.vocab).dump() << "\n";
  write_text(paths.eval_records(split), records.str());

  nlohmann::ordered_json s;
  s["dataset"] = data.name;
  s["split"] = split_name(split);
  s["checkpoint"] = run.checkpoint.string();
  s["instances"] = data.instances.size();
  s["accuracy"] = run.result.accuracy;
  s["knowledge_per_question"] = opts.knowledge_per_question;
  s["top_p"] = opts.top_p;
  s["seed"] = config.seed;
  write_text(paths.eval_summary(split), s.dump(2) + "\n");
  return run;
}

std::string run_introspect(const RunConfig& config, const fs::path& dir, const fs::path& checkpoint, Split split,
                           std::size_t index) {
  config.validate();
  RunPaths paths(dir);
  const KeyedFactWorld world = load_world(paths);
  const fs::path ckpt = checkpoint.empty() ? paths.policy_best : checkpoint;
  const SequenceModel policy = load_policy(ckpt, world, checkpoint.empty() ? "ppo" : "imitate or ppo");
  const Dataset& data = split == Split::train ? world.train : world.dev;
  if (index >= data.instances.size())
    throw Error(ErrorCategory::precondition, "instance index " + std::to_string(index) + " out of range (split has " +
                                                 std::to_string(data.instances.size()) + ")");
  const QAInstance& inst = data.instances[index];
  const TokenSeq q = format_question(inst, world.vocab);
  const KeyedFactScorer scorer = world.scorer();
  // Same per-instance stream as evaluate, so introspection reproduces eval output.
  Rng rng = make_rng(derive_seed(config.seed, {kEvalStream}), {0x4556414cULL, index});
  const auto ks = generate_knowledge_set(policy, q, config.knowledge_per_question, config.top_p,
                                         config.ppo.max_knowledge_len, rng);
  const AggregationResult agg = aggregate_predict(scorer, q, inst, ks);

  std::ostringstream out;
  out << "question: " << world.vocab.detokenize(q) << "\n";
  out << "gold: " << inst.gold << " (" << world.vocab.detokenize(inst.candidates[inst.gold]) << ")\n";
  out << "knowledge set and confidences P(a | q k):\n";
  char buf[64];
  for (std::size_t k = 0; k < ks.size(); ++k) {
    out << "  [" << k << "]";
    for (Eigen::Index a = 0; a < agg.confidence.cols(); ++a) {
      std::snprintf(buf, sizeof buf, " %.4f", agg.confidence(static_cast<Eigen::Index>(k), a));
      out << buf;
    }
    out << "  " << (ks[k].empty() ? std::string("<empty>") : world.vocab.detokenize(ks[k])) << "\n";
  }
  out << "answer: " << agg.answer << " (" << world.vocab.detokenize(inst.candidates[agg.answer]) << ")"
      << (agg.answer == inst.gold ? " correct" : " wrong") << "\n";
  out << "selected knowledge: [" << agg.knowledge << "] "
      << (ks[agg.knowledge].empty() ? std::string("<empty>") : world.vocab.detokenize(ks[agg.knowledge])) << "\n";
  return out.str();
}

}  // namespace kintro
