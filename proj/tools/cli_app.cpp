// SPDX-License-Identifier: Apache-2.0
#include "cli_app.hpp"

#include "kintro/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>

namespace kintro {
namespace fs = std::filesystem;

namespace {

constexpr const char* kOutEnv = "KINTRO_OUT";

struct Settings {
  std::string out_dir;
  std::string config_file;
  std::vector<std::string> assignments;  // --set key=value
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
};

void apply_file(RunConfig& config, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io, "cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::config, path.string() + ": invalid JSON (" + e.what() + ")");
  }
  try {
    apply_config_json(config, j);
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

// Layers, later wins: the run directory's saved config (except for
// make-synth), --config, --preset, then individual keys.
RunConfig resolve(const Settings& s, bool use_run_config) {
  RunConfig config;
  const RunPaths paths(s.out_dir);
  if (use_run_config && fs::exists(paths.config)) apply_file(config, paths.config);
  if (!s.config_file.empty()) apply_file(config, s.config_file);
  if (s.flag_options.at("preset")->count() > 0) set_config_value(config, "preset", s.flag_values.at("preset"));
  for (const auto& a : s.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorCategory::config, "--set expects key=value, got '" + a + "'");
    const std::string key = a.substr(0, eq);
    if (key == "preset") throw Error(ErrorCategory::config, "use --preset to select a preset");
    set_config_value(config, key, a.substr(eq + 1));
  }
  for (const auto& [key, opt] : s.flag_options)
    if (key != "preset" && opt->count() > 0) set_config_value(config, key, s.flag_values.at(key));
  config.validate();
  return config;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge introspection: synthetic world, imitation, PPO and knowledge-prompted evaluation"};
  app.require_subcommand(1);

  Settings s;
  if (const char* env = std::getenv(kOutEnv); env != nullptr && *env != '\0') s.out_dir = env;
  else s.out_dir = "kintro-run";

  app.add_option("-o,--out", s.out_dir, std::string("Run directory (default $") + kOutEnv + " or ./kintro-run)");
  app.add_option("-c,--config", s.config_file, "JSON config file (flat or nested keys)");
  app.add_option("--set", s.assignments, "Override a config key: --set ppo.epsilon=0.1");
  for (const auto& key : config_keys()) {
    s.flag_values[key];
    s.flag_options[key] = app.add_option("--" + key, s.flag_values[key], "config key " + key);
  }
  s.flag_options.at("threads")->description("Worker threads (results do not depend on it)");

  bool force = false;
  auto* synth = app.add_subcommand("make-synth", "Generate the keyed-fact world, datasets and silver knowledge");
  synth->add_flag("--force", force, "Overwrite a non-empty run directory");

  auto* imitate = app.add_subcommand("imitate", "Stage I: imitation learning on silver knowledge");

  bool skip_imitation = false;
  auto* ppo = app.add_subcommand("ppo", "Stage II: reinforcement learning against the frozen scorer");
  ppo->add_flag("--skip-imitation", skip_imitation, "Start from a random policy instead of policy_imit.ckpt");

  std::string checkpoint;
  std::string split = "dev";
  auto* eval = app.add_subcommand("eval", "Knowledge-prompted evaluation with aggregation");
  eval->add_option("--checkpoint", checkpoint, "Policy checkpoint (default: policy_best.ckpt)");
  eval->add_option("--split", split, "train or dev")->check(CLI::IsMember({"train", "dev"}));

  std::size_t index = 0;
  auto* introspect = app.add_subcommand("introspect", "Show K(q), confidences and the selected knowledge");
  introspect->add_option("--checkpoint", checkpoint, "Policy checkpoint (default: policy_best.ckpt)");
  introspect->add_option("--split", split, "train or dev")->check(CLI::IsMember({"train", "dev"}));
  introspect->add_option("--index", index, "Instance index")->required();

  for (auto* sub : {synth, imitate, ppo, eval, introspect}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[config]: " << e.what() << "\n";
    return exit_code(ErrorCategory::config);
  }

  try {
    const RunPaths paths(s.out_dir);
    char buf[160];
    if (synth->parsed()) {
      const RunConfig config = resolve(s, false);
      make_synth(config, paths.dir, force);
      const KeyedFactWorld world = load_world(paths);
      out << "wrote " << paths.dir.string() << ": " << world.train.instances.size() << " train / "
          << world.dev.instances.size() << " dev instances, vocabulary " << world.vocab.size() << "\n";
    } else if (imitate->parsed()) {
      const RunConfig config = resolve(s, true);
      const auto res = run_imitate(config, paths.dir);
      std::snprintf(buf, sizeof buf, "imitation: %zu epochs, final held-out nll %.4f\n", res.log.size(),
                    res.log.empty() ? 0.0 : res.log.back().heldout_nll);
      out << buf << "wrote " << paths.policy_imit.string() << "\n";
    } else if (ppo->parsed()) {
      const RunConfig config = resolve(s, true);
      PPORunOptions opts;
      opts.skip_imitation = skip_imitation;
      const auto sum = run_ppo(config, paths.dir, opts);
      const auto& r = sum.result;
      std::snprintf(buf, sizeof buf, "ppo: %zu episodes, best greedy dev accuracy %.4f at step %zu\n", r.episodes,
                    r.history.empty() ? 0.0 : r.history[r.best_index].accuracy,
                    r.history.empty() ? std::size_t{0} : r.history[r.best_index].step);
      out << buf << "wrote " << paths.policy_best.string() << "\n";
    } else if (eval->parsed()) {
      const RunConfig config = resolve(s, true);
      const Split sp = parse_split(split);
      const auto run = run_eval(config, paths.dir, checkpoint, sp);
      std::snprintf(buf, sizeof buf, "accuracy %.4f on %zu %s instances (M=%zu, p=%g)\n", run.result.accuracy,
                    run.result.records.size(), split.c_str(), config.knowledge_per_question, config.top_p);
      out << buf << "wrote " << paths.eval_summary(sp).string() << "\n";
    } else if (introspect->parsed()) {
      const RunConfig config = resolve(s, true);
      out << run_introspect(config, paths.dir, checkpoint, parse_split(split), index);
    }
  } catch (const Error& e) {
    err << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace kintro
