#include "cpg_actor/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cpg_actor/checkpoint.hpp"
#include "cpg_actor/stats.hpp"

namespace cpg_actor {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kHistogramBins = 30;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

void print_update(std::ostream& os, const std::string& tag, const UpdateStats& s) {
  os << tag << " update " << s.update << " steps " << s.steps << " reward " << s.mean_ep_reward
     << " episodes " << s.episodes << " log_std " << s.log_std;
  if (s.faults > 0) os << " faults " << s.faults;
  os << std::endl;
}

void train_run(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir,
               std::ostream* progress) {
  const ExperimentConfig rc = run_config(cfg, seed);
  fs::create_directories(dir);
  {
    std::ofstream c(dir / "config.cfg");
    c << serialize_config(rc);
  }
  const std::string tag = std::string(actor_name(cfg.actor)) + " seed " + std::to_string(seed);
  UpdateHook hook;
  if (progress) {
    hook = [progress, tag](const UpdateStats& s, std::span<const double>) {
      print_update(*progress, tag, s);
    };
  }
  train(rc, seed, rc.total_steps, dir, hook);
}

}  // namespace

fs::path run_directory(const fs::path& out, ActorKind actor, std::uint64_t seed) {
  return out / std::string(actor_name(actor)) / ("seed_" + std::to_string(seed));
}

ExperimentConfig run_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.seeds = {seed};
  return c;
}

std::vector<TrainLogRow> read_train_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing training log " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<TrainLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 7) throw std::runtime_error("malformed row in " + path.string());
    rows.push_back({std::stoi(c[0]), std::stoll(c[1]), to_double(c[2]), to_double(c[3]),
                    to_double(c[4]), to_double(c[5]), to_double(c[6])});
  }
  return rows;
}

double final_window_reward(const std::vector<TrainLogRow>& log, double fraction) {
  std::vector<UpdateStats> s(log.size());
  for (std::size_t k = 0; k < log.size(); ++k) s[k].mean_ep_reward = log[k].mean_ep_reward;
  return final_window_reward(s, fraction);
}

bool run_is_complete(const fs::path& dir, const ExperimentConfig& cfg, std::uint64_t seed) {
  const fs::path ckpt_path = dir / "checkpoint_final.json";
  if (!fs::exists(ckpt_path) || !fs::exists(dir / "train_log.csv")) return false;
  try {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    ExperimentConfig stored = parse_config(ckpt.config);
    const ExperimentConfig want = run_config(cfg, seed);
    stored.out = want.out;
    return stored == want && ckpt.seed == seed && ckpt.steps >= want.total_steps;
  } catch (const std::exception&) {
    return false;
  }
}

void ensure_trained(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir,
                    std::ostream* progress) {
  if (run_is_complete(dir, cfg, seed)) {
    if (progress) *progress << "reusing " << dir.string() << '\n';
    return;
  }
  train_run(cfg, seed, dir, progress);
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  for (const std::uint64_t seed : cfg.seeds) {
    const fs::path dir = run_directory(cfg.out, cfg.actor, seed);
    try {
      train_run(cfg, seed, dir, &out);
      out << "wrote " << dir.string() << '\n';
    } catch (const TrainingAborted& e) {
      err << "training aborted: " << e.what() << " (state dumped to "
          << (dir / "nan_dump.json").string() << ")\n";
      return 2;
    }
  }
  return 0;
}

LoadedRun load_run(const fs::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  ExperimentConfig cfg = parse_config(ckpt.config);
  if (cfg.actor != ckpt.actor) throw CheckpointError("checkpoint actor does not match its config");
  Agent agent = make_agent(cfg);
  std::vector<double> params = agent_params(agent, ckpt);
  RunningNormalizer norm = checkpoint_normalizer(ckpt, cfg.obs_clip);
  return LoadedRun{std::move(cfg), std::move(agent), std::move(params), std::move(norm), ckpt.steps};
}

std::string metrics_json(const EvalMetrics& m, std::int64_t steps) {
  nlohmann::ordered_json j;
  j["steps"] = steps;
  j["episodes"] = m.episodes;
  j["mean_reward"] = m.mean_reward;
  j["std_reward"] = m.std_reward;
  j["mean_length"] = m.mean_length;
  j["mean_peak_height"] = m.mean_peak_height;
  j["mean_foot_slip"] = m.mean_foot_slip;
  j["mean_abs_delta_action"] = m.mean_abs_delta_action;
  j["mean_desired_velocity"] = m.mean_desired_velocity;
  j["velocity_band_fraction"] = m.velocity_band_fraction;
  j["velocity_profile_band_fraction"] = m.velocity_profile_band_fraction;
  if (m.has_cpg) {
    j["theta_dot_variance"] = m.theta_dot_variance;
    j["r_ddot_variance"] = m.r_ddot_variance;
  }
  return j.dump(2) + "\n";
}

void write_trajectory_csv(const fs::path& path, const EpisodeRecord& rec, double control_dt) {
  auto out = open_out(path);
  TrajectoryWriter w(out);
  w.initial(rec.initial);
  for (const StepResult& r : rec.steps) w.row(r, r.state.step * control_dt);
}

void write_oscillator_csv(const fs::path& path, const EpisodeRecord& rec, double control_dt) {
  auto out = open_out(path);
  out << "t,theta1,theta2,theta_dot1,theta_dot2,r1,r2,r_ddot1,r_ddot2\n";
  for (std::size_t k = 0; k < rec.cpg.size() && k < rec.steps.size(); ++k) {
    const CpgState& c = rec.cpg[k];
    out << rec.steps[k].state.step * control_dt << ',' << c.theta[0] << ',' << c.theta[1] << ','
        << c.theta_dot[0] << ',' << c.theta_dot[1] << ',' << c.r[0] << ',' << c.r[1] << ','
        << c.r_ddot[0] << ',' << c.r_ddot[1] << '\n';
  }
}

EvalMetrics cmd_eval(const fs::path& checkpoint, const EvalCommandOptions& opts) {
  const LoadedRun run = load_run(checkpoint);
  EvalOptions eo;
  eo.episodes = opts.episodes;
  eo.deterministic = opts.deterministic;
  eo.seed = opts.seed;
  eo.keep_records = !opts.out_dir.empty();
  const EvalResult res = evaluate(run.cfg, run.agent, run.params, run.normalizer, eo);
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    open_out(opts.out_dir / "metrics.json") << metrics_json(res.metrics, run.steps);
    for (std::size_t e = 0; e < res.records.size(); ++e) {
      const std::string k = std::to_string(e);
      const double dt = run.cfg.hopper.control_dt();
      write_trajectory_csv(opts.out_dir / ("trajectory_" + k + ".csv"), res.records[e], dt);
      if (!res.records[e].cpg.empty()) {
        write_oscillator_csv(opts.out_dir / ("oscillators_" + k + ".csv"), res.records[e], dt);
      }
    }
  }
  return res.metrics;
}

std::vector<CompareRow> cmd_compare(const ExperimentConfig& cfg,
                                    const std::vector<ActorKind>& actors, std::ostream* progress) {
  if (actors.size() < 2) throw std::invalid_argument("compare needs at least two actors");
  std::vector<CompareRow> rows;
  fs::create_directories(cfg.out);
  auto curves = open_out(fs::path(cfg.out) / "comparison.csv");
  curves << "actor,seed,step,mean_ep_reward\n";
  for (const ActorKind actor : actors) {
    ExperimentConfig ac = cfg;
    ac.actor = actor;
    CompareRow row{actor, cfg.seeds, {}};
    for (const std::uint64_t seed : cfg.seeds) {
      const fs::path dir = run_directory(cfg.out, actor, seed);
      ensure_trained(ac, seed, dir, progress);
      const auto log = read_train_log(dir / "train_log.csv");
      for (const auto& r : log) {
        curves << actor_name(actor) << ',' << seed << ',' << r.steps << ',' << r.mean_ep_reward
               << '\n';
      }
      row.final_rewards.push_back(final_window_reward(log));
    }
    rows.push_back(std::move(row));
  }
  auto summary = open_out(fs::path(cfg.out) / "comparison_summary.csv");
  summary << "actor,seeds,mean_final_reward,std_final_reward,reference,ratio_to_reference,"
             "p_value_greater\n";
  const auto& ref = rows.front();
  const double ref_mean = mean_of(ref.final_rewards);
  for (const auto& r : rows) {
    const double m = mean_of(r.final_rewards);
    summary << actor_name(r.actor) << ',' << r.seeds.size() << ',' << m << ','
            << std::sqrt(variance_of(r.final_rewards)) << ',' << actor_name(ref.actor) << ',';
    if (&r == &ref) {
      summary << "1,\n";
      continue;
    }
    // Ratio and test of the reference actor against this one.
    const RankSumResult t = wilcoxon_rank_sum_greater(ref.final_rewards, r.final_rewards);
    summary << ref_mean / m << ',' << t.p_value << '\n';
  }
  return rows;
}

void cmd_export_plots(const fs::path& run_dir, const fs::path& out_dir) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("run directory " + run_dir.string() + " does not exist");
  if (!fs::exists(run_dir / "train_log.csv")) {
    throw std::runtime_error("run directory " + run_dir.string() + " has no train_log.csv");
  }
  fs::create_directories(out_dir);

  // Parameter histograms with one set of edges per group across all updates.
  if (fs::exists(run_dir / "params.csv")) {
    std::ifstream in(run_dir / "params.csv");
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::map<int, std::vector<double>>> groups;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto c = split_csv_line(line);
      if (c.size() != 4) throw std::runtime_error("malformed row in params.csv");
      groups[c[1]][std::stoi(c[0])].push_back(std::stod(c[3]));
    }
    auto w1 = open_out(out_dir / "wasserstein.csv");
    w1 << "group,first_update,last_update,w1\n";
    for (const auto& [name, series] : groups) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& [u, v] : series) {
        for (double x : v) {
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
      }
      const auto edges = linear_edges(lo, hi, kHistogramBins);
      auto h = open_out(out_dir / ("hist_" + name + ".csv"));
      h << "update,bin,lo,hi,count\n";
      for (const auto& [u, v] : series) {
        const auto counts = histogram(v, edges);
        for (std::size_t b = 0; b < counts.size(); ++b) {
          h << u << ',' << b << ',' << edges[b] << ',' << edges[b + 1] << ',' << counts[b] << '\n';
        }
      }
      const auto& first = series.begin()->second;
      const auto& last = series.rbegin()->second;
      w1 << name << ',' << series.begin()->first << ',' << series.rbegin()->first << ','
         << wasserstein1(first, last) << '\n';
    }
  }

  // Desired positions, oscillator and height traces from the final policy.
  const fs::path ckpt = run_dir / "checkpoint_final.json";
  if (fs::exists(ckpt)) {
    const LoadedRun run = load_run(ckpt);
    EvalOptions eo;
    eo.episodes = 1;
    eo.seed = run.cfg.eval.seed_offset;
    eo.keep_records = true;
    const EvalResult res = evaluate(run.cfg, run.agent, run.params, run.normalizer, eo);
    const EpisodeRecord& rec = res.records.front();
    const double dt = run.cfg.hopper.control_dt();
    auto t = open_out(out_dir / "traces.csv");
    t << "step,time,desired_hfe,desired_kfe,desired_vel_hfe,desired_vel_kfe,theta_dot_0,"
         "theta_dot_1,r_ddot_0,r_ddot_1,hip_height,foot_height\n";
    Vec2 prev = rec.initial.desired;
    for (std::size_t k = 0; k < rec.steps.size(); ++k) {
      const HopperState& s = rec.steps[k].state;
      t << s.step << ',' << s.step * dt << ',' << s.desired[0] << ',' << s.desired[1] << ','
        << (s.desired[0] - prev[0]) / dt << ',' << (s.desired[1] - prev[1]) / dt;
      if (k < rec.cpg.size()) {
        const CpgState& c = rec.cpg[k];
        t << ',' << c.theta_dot[0] << ',' << c.theta_dot[1] << ',' << c.r_ddot[0] << ','
          << c.r_ddot[1];
      } else {
        t << ",,,,";
      }
      t << ',' << s.z << ',' << s.foot_pos[1] << '\n';
      prev = s.desired;
    }
  }

  // Reward curve copy for convenience.
  const auto log = read_train_log(run_dir / "train_log.csv");
  auto r = open_out(out_dir / "reward_curve.csv");
  r << "update,steps,mean_ep_reward\n";
  for (const auto& row : log) r << row.update << ',' << row.steps << ',' << row.mean_ep_reward << '\n';
}

}  // namespace cpg_actor
