#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpg_actor/checkpoint.hpp"
#include "cpg_actor/commands.hpp"

using namespace cpg_actor;

namespace {

struct CommonFlags {
  std::string config;
  std::string actor;
  std::optional<std::int64_t> steps;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::optional<std::size_t> workers;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, CommonFlags& f, bool with_actor) {
  app->add_option("--config", f.config, "Experiment config file (key = value lines)");
  if (with_actor) app->add_option("--actor", f.actor, "cpg-actor, cpg-actor-open-loop, mlp-actor or cpg-in-env");
  app->add_option("--steps", f.steps, "Environment steps per run");
  app->add_option("--seed,--seeds", f.seeds, "Seed or comma-separated seeds")->delimiter(',');
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--workers", f.workers, "Parallel environment workers");
  app->add_option("--set", f.sets, "Override one config key, e.g. --set ppo.lr=1e-4");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (!f.actor.empty()) cfg.actor = parse_actor_kind(f.actor);
  if (f.steps) cfg.total_steps = *f.steps;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.out.empty()) cfg.out = f.out;
  if (f.workers) cfg.ppo.workers = *f.workers;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CPG actor-critic training for a single-leg hopper"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "Train one actor for each seed");
  add_common(train, train_flags, true);

  std::string checkpoint, eval_out;
  int episodes = 10;
  bool deterministic = true;
  std::optional<std::uint64_t> eval_seed;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  eval->add_option("--episodes", episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  eval->add_option("--deterministic", deterministic, "Use action means (true) or sample (false)");
  eval->add_option("--seed", eval_seed, "First episode seed (default: eval.seed_offset)");
  eval->add_option("--out", eval_out, "Directory for metrics.json and trajectory CSVs");

  CommonFlags cmp_flags;
  std::vector<std::string> actors = {"cpg-actor", "cpg-in-env"};
  auto* compare = app.add_subcommand("compare", "Train several actors and compare final rewards");
  add_common(compare, cmp_flags, false);
  compare->add_option("--actors", actors, "Actors to compare; the first is the reference")->delimiter(',');

  std::string run_dir, plots_out;
  auto* plots = app.add_subcommand("export-plots", "Write plot-ready CSVs for a run directory");
  plots->add_option("--run", run_dir, "Run directory (holds train_log.csv)")->required();
  plots->add_option("--out", plots_out, "Output directory (default: <run>/plots)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(build_config(train_flags), std::cout, std::cerr);
    }
    if (eval->parsed()) {
      EvalCommandOptions opts;
      opts.episodes = episodes;
      opts.deterministic = deterministic;
      opts.out_dir = eval_out;
      opts.seed = eval_seed ? *eval_seed : load_run(checkpoint).cfg.eval.seed_offset;
      std::cout << metrics_json(cmd_eval(checkpoint, opts), load_checkpoint(checkpoint).steps);
      return 0;
    }
    if (compare->parsed()) {
      std::vector<ActorKind> kinds;
      for (const auto& a : actors) kinds.push_back(parse_actor_kind(a));
      const ExperimentConfig cfg = build_config(cmp_flags);
      const auto rows = cmd_compare(cfg, kinds, &std::cout);
      for (const auto& r : rows) {
        std::cout << actor_name(r.actor) << " final rewards:";
        for (double v : r.final_rewards) std::cout << ' ' << v;
        std::cout << '\n';
      }
      std::cout << "wrote " << (std::filesystem::path(cfg.out) / "comparison_summary.csv").string() << '\n';
      return 0;
    }
    if (plots->parsed()) {
      const std::filesystem::path out = plots_out.empty() ? std::filesystem::path(run_dir) / "plots"
                                                            : std::filesystem::path(plots_out);
      cmd_export_plots(run_dir, out);
      std::cout << "wrote " << out.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
