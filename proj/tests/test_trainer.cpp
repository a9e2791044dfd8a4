#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cpg_actor/checkpoint.hpp"
#include "cpg_actor/commands.hpp"
#include "cpg_actor/trainer.hpp"

using namespace cpg_actor;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(ActorKind actor) {
  ExperimentConfig cfg;
  cfg.actor = actor;
  cfg.total_steps = 256;
  cfg.ppo.rollout = 64;
  cfg.ppo.workers = 2;
  cfg.ppo.minibatch = 32;
  cfg.ppo.epochs = 2;
  cfg.eval.checkpoint_steps = {128};
  cfg.actor_cfg.warm_start.epochs = 3;
  cfg.actor_cfg.warm_start.samples = 256;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cpg_actor_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("training is reproducible for a fixed seed") {
  TempDir tmp("train_repro");
  for (ActorKind kind : {ActorKind::kCpgActor, ActorKind::kMlpActor, ActorKind::kCpgInEnv}) {
    CAPTURE(actor_name(kind));
    const auto cfg = tiny(kind);
    const fs::path a = tmp.path / "a" / actor_name(kind);
    const fs::path b = tmp.path / "b" / actor_name(kind);
    const auto ra = train(cfg, 3, cfg.total_steps, a);
    const auto rb = train(cfg, 3, cfg.total_steps, b);
    CHECK(ra.params == rb.params);
    CHECK(ra.steps == 256);
    CHECK(ra.log.size() == 2);
    CHECK(slurp(a / "train_log.csv") == slurp(b / "train_log.csv"));
    CHECK(slurp(a / "grad_log.csv") == slurp(b / "grad_log.csv"));
    CHECK(slurp(a / "checkpoint_final.json") == slurp(b / "checkpoint_final.json"));
    CHECK(fs::exists(a / "checkpoint_128.json"));
    CHECK(slurp(a / "train_log.csv").rfind("update,steps,mean_ep_reward,std_ep_reward,surrogate,value_loss,log_std\n", 0) == 0);
    CHECK(line_count(a / "train_log.csv") == 3);
    CHECK(fs::exists(a / "params.csv") == (kind == ActorKind::kCpgActor));
    CHECK(fs::exists(a / "warm_start_loss.csv") == (kind == ActorKind::kCpgInEnv));
    CHECK(ra.warm_start.has_value() == (kind == ActorKind::kCpgInEnv));

    const auto rc = train(cfg, 4, cfg.total_steps, {});
    CHECK(rc.params != ra.params);
  }
}

TEST_CASE("gradients reach both CPG parameter groups") {
  const auto cfg = tiny(ActorKind::kCpgActor);
  const auto r = train(cfg, 1, cfg.total_steps, {});
  for (const auto& u : r.log) {
    CHECK(u.grad_norm_cpg > 0.0);
    CHECK(u.grad_norm_feedback_out > 0.0);
    CHECK(std::isfinite(u.grad_norm));
  }
}

TEST_CASE("zero steps writes only the initial checkpoint") {
  TempDir tmp("train_zero");
  const auto cfg = tiny(ActorKind::kCpgActor);
  const auto r = train(cfg, 1, 0, tmp.path);
  CHECK(r.log.empty());
  CHECK(r.steps == 0);
  CHECK(fs::exists(tmp.path / "checkpoint_final.json"));
  CHECK_FALSE(fs::exists(tmp.path / "checkpoint_128.json"));
  const auto ckpt = load_checkpoint(tmp.path / "checkpoint_final.json");
  CHECK(ckpt.steps == 0);
  const Agent agent = make_agent(cfg);
  CHECK(agent_params(agent, ckpt) == agent.init_params(1, cfg.ppo.init_log_std));
  CHECK_THROWS(train(cfg, 1, -1, {}));

  // An untrained policy barely leaves the crouch.
  EvalCommandOptions opts;
  opts.episodes = 5;
  const auto m = cmd_eval(tmp.path / "checkpoint_final.json", opts);
  CHECK(m.episodes == 5);
  const double crouch = HopperEnv(cfg.hopper, cfg.reward).reset(opts.seed).state.z;
  CHECK(std::abs(m.mean_peak_height - crouch) < 0.15);
}

TEST_CASE("thread budget honours the environment override") {
  ::setenv("CPG_ACTOR_THREADS", "1", 1);
  CHECK(thread_budget(8) == 1);
  ::unsetenv("CPG_ACTOR_THREADS");
  CHECK(thread_budget(8) >= 1);
  CHECK(thread_budget(8) <= 8);
  CHECK(thread_budget(1) == 1);
}

TEST_CASE("train, eval and export-plots commands") {
  TempDir tmp("commands");
  auto cfg = tiny(ActorKind::kCpgActor);
  cfg.out = tmp.path.string();
  std::ostringstream out, err;
  REQUIRE(cmd_train(cfg, out, err) == 0);
  const fs::path run = run_directory(cfg.out, cfg.actor, 0);
  CHECK(run == tmp.path / "cpg-actor" / "seed_0");
  CHECK(fs::exists(run / "config.cfg"));
  CHECK(run_is_complete(run, cfg, 0));
  CHECK_FALSE(run_is_complete(run, cfg, 1));
  auto longer = cfg;
  longer.total_steps = 100000;
  CHECK_FALSE(run_is_complete(run, longer, 0));

  // A finished run is reused untouched.
  const auto stamp = fs::last_write_time(run / "checkpoint_final.json");
  std::ostringstream progress;
  ensure_trained(cfg, 0, run, &progress);
  CHECK(progress.str().find("reusing") != std::string::npos);
  CHECK(fs::last_write_time(run / "checkpoint_final.json") == stamp);

  SUBCASE("eval") {
    EvalCommandOptions opts;
    opts.episodes = 2;
    opts.out_dir = tmp.path / "eval";
    const auto m = cmd_eval(run / "checkpoint_final.json", opts);
    CHECK(m.episodes == 2);
    CHECK(m.has_cpg);
    CHECK(fs::exists(opts.out_dir / "metrics.json"));
    REQUIRE(fs::exists(opts.out_dir / "trajectory_0.csv"));
    CHECK(fs::exists(opts.out_dir / "oscillators_1.csv"));
    // Header, the initial state and one row per control step.
    const double rows = static_cast<double>(line_count(opts.out_dir / "trajectory_0.csv") +
                                            line_count(opts.out_dir / "trajectory_1.csv"));
    CHECK(rows == doctest::Approx(2.0 * (m.mean_length + 2.0)));
    const auto first = slurp(opts.out_dir / "trajectory_0.csv");
    CHECK(first.rfind("t,z,z_dot,q1,q2,qd1,qd2,pdes1,pdes2,tau1,tau2,r1,r2,r3,r4,r5,contact\n", 0) == 0);

    EvalCommandOptions again = opts;
    again.out_dir = tmp.path / "eval2";
    cmd_eval(run / "checkpoint_final.json", again);
    CHECK(slurp(opts.out_dir / "trajectory_0.csv") == slurp(again.out_dir / "trajectory_0.csv"));
    CHECK(slurp(opts.out_dir / "metrics.json") == slurp(again.out_dir / "metrics.json"));
  }
  SUBCASE("evaluation lengths match trajectory rows") {
    const LoadedRun lr = load_run(run / "checkpoint_final.json");
    EvalOptions eo;
    eo.episodes = 1;
    eo.keep_records = true;
    const auto res = evaluate(lr.cfg, lr.agent, lr.params, lr.normalizer, eo);
    REQUIRE(res.records.size() == 1);
    const fs::path p = tmp.path / "traj.csv";
    write_trajectory_csv(p, res.records[0], lr.cfg.hopper.control_dt());
    CHECK(line_count(p) == res.records[0].steps.size() + 2);
    CHECK(res.records[0].cpg.size() == res.records[0].steps.size());
  }
  SUBCASE("velocity profile band from the records") {
    const LoadedRun lr = load_run(run / "checkpoint_final.json");
    EvalOptions eo;
    eo.episodes = 4;
    eo.deterministic = false;
    eo.keep_records = true;
    const auto res = evaluate(lr.cfg, lr.agent, lr.params, lr.normalizer, eo);
    const double dt = lr.cfg.hopper.control_dt();
    const double limit = lr.cfg.hopper.joint_vel_limit;
    std::size_t longest = 0;
    for (const auto& r : res.records) longest = std::max(longest, r.steps.size());
    std::size_t ok = 0, total = 0, step_ok = 0, steps = 0;
    for (std::size_t t = 0; t < longest; ++t) {
      for (int j = 0; j < 2; ++j) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : res.records) {
          if (t >= r.steps.size()) continue;
          const double before = t == 0 ? r.initial.desired[j] : r.steps[t - 1].state.desired[j];
          sum += std::abs(r.steps[t].state.desired[j] - before) / dt;
          ++n;
        }
        ok += (sum / n <= limit) ? 1 : 0;
        ++total;
      }
    }
    for (const auto& r : res.records) {
      for (std::size_t t = 0; t < r.steps.size(); ++t) {
        bool band = true;
        for (int j = 0; j < 2; ++j) {
          const double before = t == 0 ? r.initial.desired[j] : r.steps[t - 1].state.desired[j];
          band = band && std::abs(r.steps[t].state.desired[j] - before) / dt <= limit;
        }
        step_ok += band ? 1 : 0;
        ++steps;
      }
    }
    CHECK(res.metrics.velocity_profile_band_fraction == doctest::Approx(double(ok) / double(total)).epsilon(1e-12));
    CHECK(res.metrics.velocity_band_fraction == doctest::Approx(double(step_ok) / double(steps)).epsilon(1e-12));
  }
  SUBCASE("export-plots") {
    const fs::path plots = tmp.path / "plots";
    cmd_export_plots(run, plots);
    for (const char* f : {"hist_cpg.csv", "hist_feedback_out_weight.csv", "wasserstein.csv", "traces.csv",
                          "reward_curve.csv"}) {
      CAPTURE(std::string(f));
      CHECK(fs::exists(plots / f));
    }
    CHECK_THROWS(cmd_export_plots(tmp.path / "missing", plots));
    fs::create_directories(tmp.path / "empty");
    CHECK_THROWS(cmd_export_plots(tmp.path / "empty", plots));
  }
}
