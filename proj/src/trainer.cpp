#include "cpg_actor/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <thread>

#include "cpg_actor/checkpoint.hpp"
#include "cpg_actor/numeric.hpp"
#include "cpg_actor/optim.hpp"
#include "cpg_actor/stats.hpp"
#include "cpg_actor/task.hpp"

namespace cpg_actor {

namespace {

// Minibatch gradients are reduced over this many fixed chunks, whatever the
// thread count, so results do not depend on the machine.
constexpr std::size_t kGradChunks = 8;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class F>
void parallel_for(std::size_t count, std::size_t threads, F&& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t used = std::min(threads, count);
  for (std::size_t t = 0; t < used; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += used) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct Worker {
  std::unique_ptr<Task> task;
  std::mt19937_64 rng;
  std::uint64_t seed_base = 0;
  std::uint64_t episodes = 0;
  Observation raw{};
  std::vector<double> carried;
  std::vector<double> carried_next;
  std::vector<double> mean;
  double ep_reward = 0.0;
  std::vector<double> finished;
  int faults = 0;
};

void start_episode(Worker& w, const Actor& actor, std::span<const double> actor_params) {
  w.raw = w.task->reset(derive_seed(w.seed_base, w.episodes++));
  actor.reset_state(actor_params, w.rng, w.carried);
  w.ep_reward = 0.0;
}

void collect(Worker& w, std::size_t wi, const Agent& agent, std::span<const double> params,
             const RunningNormalizer& norm, RolloutBuffer& buf) {
  const Actor& actor = agent.actor();
  const auto actor_params = agent.actor_params(params);
  const auto log_std = agent.log_std(params);
  const std::size_t od = buf.obs_dim, cd = buf.carried_dim, ad_ = buf.action_dim;
  for (std::size_t t = 0; t < buf.length; ++t) {
    const std::size_t i = buf.index(wi, t);
    std::copy(w.raw.begin(), w.raw.end(), buf.raw_obs.begin() + static_cast<std::ptrdiff_t>(i * od));
    const std::span<double> obs(buf.obs.data() + i * od, od);
    norm.normalize(w.raw, obs);
    std::copy(w.carried.begin(), w.carried.end(), buf.carried.begin() + static_cast<std::ptrdiff_t>(i * cd));
    actor.act(actor_params, obs, w.carried, w.carried_next, w.mean);
    const GaussianSample s = sample_action(w.mean, log_std, w.rng);
    std::copy(s.action.begin(), s.action.end(), buf.actions.begin() + static_cast<std::ptrdiff_t>(i * ad_));
    buf.log_probs[i] = s.log_prob;
    buf.values[i] = agent.value(params, obs);

    bool fault = false;
    StepResult r;
    try {
      r = w.task->step(s.action);
    } catch (const PhysicsFault&) {
      fault = true;
    }
    if (fault) {
      ++w.faults;
      buf.rewards[i] = 0.0;
      buf.dones[i] = 1.0;
      w.finished.push_back(w.ep_reward);
      start_episode(w, actor, actor_params);
      continue;
    }
    buf.rewards[i] = r.reward;
    buf.dones[i] = r.done ? 1.0 : 0.0;
    w.ep_reward += r.reward;
    w.raw = r.observation;
    w.carried.swap(w.carried_next);
    if (r.done) {
      w.finished.push_back(w.ep_reward);
      start_episode(w, actor, actor_params);
    }
  }
  std::array<double, kObservationSize> obs{};
  norm.normalize(w.raw, obs);
  buf.bootstrap[wi] = agent.value(params, obs);
}

struct GroupSlices {
  std::size_t cpg_off = 0, cpg_len = 0;
  std::size_t fb_off = 0, fb_len = 0;  // output layer: weights then biases
  std::size_t fb_weights = 0;
};

GroupSlices group_slices(const Agent& agent) {
  GroupSlices g;
  if (const auto* cpg = dynamic_cast<const CpgActor*>(&agent.actor())) {
    g.cpg_off = cpg->cpg_offset();
    g.cpg_len = cpg->topology().param_count();
    if (cpg->closed_loop()) {
      g.fb_off = cpg->feedback_offset() + cpg->feedback().output_layer_offset();
      g.fb_weights = cpg->feedback().output_weight_count();
      g.fb_len = g.fb_weights + cpg->feedback().output_bias_count();
    }
  }
  return g;
}

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header << '\n' << std::setprecision(17);
  return out;
}

void write_param_rows(std::ofstream& out, int update, std::span<const double> params,
                      const GroupSlices& g) {
  for (std::size_t k = 0; k < g.cpg_len; ++k) {
    out << update << ",cpg," << k << ',' << params[g.cpg_off + k] << '\n';
  }
  for (std::size_t k = 0; k < g.fb_weights; ++k) {
    out << update << ",feedback_out_weight," << k << ',' << params[g.fb_off + k] << '\n';
  }
  for (std::size_t k = g.fb_weights; k < g.fb_len; ++k) {
    out << update << ",feedback_out_bias," << k - g.fb_weights << ',' << params[g.fb_off + k]
        << '\n';
  }
}

double slice_norm(std::span<const double> g, std::size_t off, std::size_t len) {
  return len == 0 ? 0.0 : global_norm(g.subspan(off, len));
}

}  // namespace

std::size_t thread_budget(std::size_t requested) {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CPG_ACTOR_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, std::min(n, requested));
}

Agent make_agent(const ExperimentConfig& cfg) {
  return Agent(make_actor(cfg.actor, cfg.actor_cfg), cfg.ppo.critic_hidden);
}

TrainResult train(const ExperimentConfig& cfg, std::uint64_t seed, std::int64_t total_steps,
                  const std::filesystem::path& out_dir, const UpdateHook& hook) {
  cfg.validate();
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  const Agent agent = make_agent(cfg);
  const Actor& actor = agent.actor();
  const HopperEnv env(cfg.hopper, cfg.reward);
  const PpoConfig& pc = cfg.ppo;
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(out_dir);
  const std::string config_text = serialize_config(cfg);

  TrainResult result;
  result.params = agent.init_params(seed, pc.init_log_std);
  result.normalizer = RunningNormalizer(kObservationSize, cfg.obs_clip);
  std::vector<double>& params = result.params;
  RunningNormalizer& norm = result.normalizer;

  // Supervised pre-training for actors that ask for it.
  if (const auto target = actor.warm_start_target()) {
    const auto& ws = cfg.actor_cfg.warm_start;
    auto task = make_task(actor.kind(), env, cfg.actor_cfg);
    std::mt19937_64 rng(derive_seed(seed, 6));
    std::normal_distribution<double> noise(0.0, std::exp(pc.init_log_std));
    std::vector<double> raw;
    raw.reserve(ws.samples * kObservationSize);
    std::uint64_t episode = 0;
    Observation o = task->reset(derive_seed(seed, 7 + episode++));
    std::vector<double> action(target->size());
    while (raw.size() < ws.samples * kObservationSize) {
      raw.insert(raw.end(), o.begin(), o.end());
      for (std::size_t k = 0; k < action.size(); ++k) action[k] = (*target)[k] + noise(rng);
      bool reset = false;
      try {
        const StepResult r = task->step(action);
        o = r.observation;
        reset = r.done;
      } catch (const PhysicsFault&) {
        reset = true;
      }
      if (reset) o = task->reset(derive_seed(seed, 7 + episode++));
    }
    norm.update(raw);
    std::vector<double> normed(raw.size());
    for (std::size_t k = 0; k < ws.samples; ++k) {
      norm.normalize(std::span(raw).subspan(k * kObservationSize, kObservationSize),
                     std::span(normed).subspan(k * kObservationSize, kObservationSize));
    }
    result.warm_start = warm_start(actor, std::span(params).first(actor.param_count()), normed,
                                   *target, ws, derive_seed(seed, 8));
    if (write) {
      auto out = open_csv(out_dir / "warm_start_loss.csv", "epoch,loss");
      out << 0 << ',' << result.warm_start->initial_loss << '\n';
      for (std::size_t e = 0; e < result.warm_start->epoch_loss.size(); ++e) {
        out << e + 1 << ',' << result.warm_start->epoch_loss[e] << '\n';
      }
    }
  }

  const GroupSlices groups = group_slices(agent);
  std::ofstream train_log, grad_log, param_log;
  if (write) {
    train_log = open_csv(out_dir / "train_log.csv",
                         "update,steps,mean_ep_reward,std_ep_reward,surrogate,value_loss,log_std");
    grad_log = open_csv(out_dir / "grad_log.csv",
                        "update,steps,grad_norm,grad_norm_cpg,grad_norm_feedback_out,episodes,faults");
    if (groups.cpg_len > 0) {
      param_log = open_csv(out_dir / "params.csv", "update,group,index,value");
      write_param_rows(param_log, 0, params, groups);
    }
  }

  const std::size_t nw = pc.workers;
  std::vector<Worker> workers(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    Worker& wk = workers[w];
    wk.task = make_task(actor.kind(), env, cfg.actor_cfg);
    wk.rng.seed(derive_seed(seed, 100 + w));
    wk.seed_base = derive_seed(seed, 200 + w);
    wk.carried.assign(actor.carried_dim(), 0.0);
    wk.carried_next.assign(actor.carried_dim(), 0.0);
    wk.mean.assign(actor.action_dim(), 0.0);
    start_episode(wk, actor, agent.actor_params(params));
  }

  const std::size_t threads = thread_budget(std::max(nw, kGradChunks));
  AdamState adam(params.size());
  const AdamConfig acfg{pc.lr, 0.9, 0.999, 1e-8, pc.max_grad_norm};
  std::mt19937_64 shuffle_rng(derive_seed(seed, 9));
  std::vector<ad::Tape> tapes(kGradChunks);
  std::vector<std::vector<double>> chunk_grads(kGradChunks, std::vector<double>(params.size()));
  std::vector<double> grad(params.size());
  std::vector<SampleTerms> chunk_terms(kGradChunks);
  std::vector<bool> saved(cfg.eval.checkpoint_steps.size(), false);

  auto save = [&](const std::string& name, int updates) {
    if (!write) return;
    save_checkpoint(out_dir / name,
                    make_checkpoint(agent, params, norm, seed, result.steps, updates, config_text));
  };

  int update = 0;
  while (result.steps < total_steps) {
    ++update;
    RolloutBuffer buf(nw, pc.rollout, kObservationSize, actor.carried_dim(), actor.action_dim());
    for (auto& wk : workers) {
      wk.finished.clear();
      wk.faults = 0;
    }
    parallel_for(nw, threads, [&](std::size_t w) { collect(workers[w], w, agent, params, norm, buf); });
    result.steps += static_cast<std::int64_t>(buf.size());
    norm.update(buf.raw_obs);
    buf.finish(pc.gamma, pc.lam);

    UpdateStats st;
    st.update = update;
    st.steps = result.steps;
    std::vector<double> ep;
    for (const auto& wk : workers) {
      ep.insert(ep.end(), wk.finished.begin(), wk.finished.end());
      st.faults += wk.faults;
    }
    st.episodes = static_cast<int>(ep.size());
    st.mean_ep_reward = ep.empty() ? kNaN : mean_of(ep);
    st.std_ep_reward = ep.empty() ? kNaN : std::sqrt(variance_of(ep));

    std::vector<std::size_t> order(buf.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double surr_sum = 0.0, vl_sum = 0.0;
    std::size_t seen = 0, steps_taken = 0;
    double gn_sum = 0.0, gcpg_sum = 0.0, gfb_sum = 0.0;
    for (int epoch = 0; epoch < pc.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t start = 0; start < order.size(); start += pc.minibatch) {
        const std::size_t stop = std::min(order.size(), start + pc.minibatch);
        const std::size_t count = stop - start;
        const double weight = 1.0 / static_cast<double>(count);
        parallel_for(kGradChunks, threads, [&](std::size_t c) {
          auto& g = chunk_grads[c];
          std::fill(g.begin(), g.end(), 0.0);
          SampleTerms acc{0.0, 0.0, 0.0, 0.0};
          const std::size_t lo = start + count * c / kGradChunks;
          const std::size_t hi = start + count * (c + 1) / kGradChunks;
          for (std::size_t k = lo; k < hi; ++k) {
            const SampleTerms t = accumulate_sample_gradient(tapes[c], agent, params, g,
                                                             buf.sample(order[k]), pc, weight);
            acc.surrogate += t.surrogate;
            acc.value_loss += t.value_loss;
          }
          chunk_terms[c] = acc;
        });
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t c = 0; c < kGradChunks; ++c) {
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += chunk_grads[c][i];
          surr_sum += chunk_terms[c].surrogate;
          vl_sum += chunk_terms[c].value_loss;
        }
        seen += count;
        const double gn = global_norm(grad);
        if (!std::isfinite(gn) || !std::isfinite(surr_sum) || !std::isfinite(vl_sum)) {
          if (write) {
            std::ofstream dump(out_dir / "nan_dump.json");
            dump << "{\n \"update\": " << update << ",\n \"steps\": " << result.steps
                 << ",\n \"epoch\": " << epoch << ",\n \"minibatch_start\": " << start
                 << ",\n \"grad_norm\": \"" << gn << "\",\n \"surrogate_sum\": \"" << surr_sum
                 << "\",\n \"value_loss_sum\": \"" << vl_sum << "\",\n \"params\": \""
                 << hex_encode(params) << "\"\n}\n";
          }
          throw TrainingAborted("non-finite loss or gradient at update " + std::to_string(update) +
                                " (epoch " + std::to_string(epoch) + ")");
        }
        gn_sum += gn;
        gcpg_sum += slice_norm(grad, groups.cpg_off, groups.cpg_len);
        gfb_sum += slice_norm(grad, groups.fb_off, groups.fb_len);
        ++steps_taken;
        adam_update(params, grad, adam, acfg);
      }
    }
    st.surrogate = surr_sum / static_cast<double>(seen);
    st.value_loss = vl_sum / static_cast<double>(seen);
    st.log_std = mean_of(agent.log_std(params));
    st.grad_norm = gn_sum / static_cast<double>(steps_taken);
    st.grad_norm_cpg = gcpg_sum / static_cast<double>(steps_taken);
    st.grad_norm_feedback_out = gfb_sum / static_cast<double>(steps_taken);
    result.log.push_back(st);

    if (write) {
      train_log << st.update << ',' << st.steps << ',' << st.mean_ep_reward << ','
                << st.std_ep_reward << ',' << st.surrogate << ',' << st.value_loss << ','
                << st.log_std << std::endl;
      grad_log << st.update << ',' << st.steps << ',' << st.grad_norm << ',' << st.grad_norm_cpg
               << ',' << st.grad_norm_feedback_out << ',' << st.episodes << ',' << st.faults
               << std::endl;
      if (groups.cpg_len > 0) write_param_rows(param_log, update, params, groups);
      for (std::size_t k = 0; k < saved.size(); ++k) {
        if (!saved[k] && result.steps >= cfg.eval.checkpoint_steps[k]) {
          saved[k] = true;
          save("checkpoint_" + std::to_string(cfg.eval.checkpoint_steps[k]) + ".json", update);
        }
      }
    }
    if (hook) hook(st, params);
  }
  save("checkpoint_final.json", update);
  return result;
}

double final_window_reward(const std::vector<UpdateStats>& log, double fraction) {
  if (log.empty()) return kNaN;
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(log.size())));
  const std::size_t take = std::clamp<std::size_t>(n, 1, log.size());
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t k = log.size() - take; k < log.size(); ++k) {
    if (std::isfinite(log[k].mean_ep_reward)) {
      s += log[k].mean_ep_reward;
      ++used;
    }
  }
  return used == 0 ? kNaN : s / static_cast<double>(used);
}

EvalResult evaluate(const ExperimentConfig& cfg, const Agent& agent,
                    std::span<const double> params, const RunningNormalizer& normalizer,
                    const EvalOptions& opts) {
  if (opts.episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  if (params.size() != agent.param_count()) throw std::invalid_argument("evaluate: parameter length mismatch");
  const Actor& actor = agent.actor();
  const HopperEnv env(cfg.hopper, cfg.reward);
  const auto actor_params = agent.actor_params(params);
  const auto log_std = agent.log_std(params);
  const double dt = cfg.hopper.control_dt();
  const double limit = cfg.hopper.joint_vel_limit;

  EvalResult out;
  EvalMetrics& m = out.metrics;
  m.episodes = opts.episodes;
  std::vector<double> rewards, lengths, peaks;
  double slip_sum = 0.0, delta_sum = 0.0;
  std::size_t step_count = 0, joint_count = 0, in_band = 0;
  std::vector<double> theta_var, rdd_var;
  std::array<std::vector<double>, 2> profile_sum;
  std::vector<int> profile_count;

  for (int e = 0; e < opts.episodes; ++e) {
    auto task = make_task(actor.kind(), env, cfg.actor_cfg);
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(e)));
    Observation raw = task->reset(opts.seed + static_cast<std::uint64_t>(e));
    std::vector<double> carried(actor.carried_dim()), next(actor.carried_dim()),
        mean(actor.action_dim());
    actor.reset_state(actor_params, rng, carried);

    EpisodeRecord rec;
    rec.initial = task->hopper_state();
    rec.peak_height = rec.initial.z;
    Vec2 prev = rec.initial.desired;
    std::vector<std::vector<double>> td(2), rdd(2);
    bool done = false;
    while (!done) {
      Observation obs{};
      normalizer.normalize(raw, obs);
      actor.act(actor_params, obs, carried, next, mean);
      std::vector<double> action = mean;
      if (!opts.deterministic) action = sample_action(mean, log_std, rng).action;
      StepResult r;
      try {
        r = task->step(action);
      } catch (const PhysicsFault&) {
        break;
      }
      carried.swap(next);
      const CpgState* cs = nullptr;
      CpgState unpacked;
      if (!carried.empty()) {
        unpacked = CpgState::unpack(carried);
        cs = &unpacked;
      } else {
        cs = task->cpg_state();
      }
      if (cs != nullptr) {
        m.has_cpg = true;
        for (std::size_t i = 0; i < 2 && i < cs->size(); ++i) {
          td[i].push_back(cs->theta_dot[i]);
          rdd[i].push_back(cs->r_ddot[i]);
        }
        if (opts.keep_records) rec.cpg.push_back(*cs);
      }
      bool band = true;
      const std::size_t t = rec.steps.size();
      if (profile_count.size() <= t) {
        profile_count.resize(t + 1, 0);
        for (auto& p : profile_sum) p.resize(t + 1, 0.0);
      }
      ++profile_count[t];
      for (int j = 0; j < 2; ++j) {
        const double d = std::abs(r.state.desired[j] - prev[j]);
        delta_sum += d;
        ++joint_count;
        profile_sum[j][t] += d / dt;
        if (d / dt > limit) band = false;
      }
      in_band += band ? 1 : 0;
      prev = r.state.desired;
      slip_sum += r.info.foot_slip;
      ++step_count;
      rec.reward += r.reward;
      rec.peak_height = std::max(rec.peak_height, r.state.z);
      raw = r.observation;
      done = r.done;
      if (opts.keep_records) rec.steps.push_back(r);
      else rec.steps.resize(rec.steps.size() + 1);
    }
    rewards.push_back(rec.reward);
    lengths.push_back(static_cast<double>(rec.steps.size()));
    peaks.push_back(rec.peak_height);
    if (!td[0].empty()) {
      theta_var.push_back(0.5 * (variance_of(td[0]) + variance_of(td[1])));
      rdd_var.push_back(0.5 * (variance_of(rdd[0]) + variance_of(rdd[1])));
    }
    if (opts.keep_records) out.records.push_back(std::move(rec));
  }

  m.mean_reward = mean_of(rewards);
  m.std_reward = std::sqrt(variance_of(rewards));
  m.mean_length = mean_of(lengths);
  m.mean_peak_height = mean_of(peaks);
  if (step_count > 0) {
    m.mean_foot_slip = slip_sum / static_cast<double>(step_count);
    m.mean_abs_delta_action = delta_sum / static_cast<double>(joint_count);
    m.mean_desired_velocity = m.mean_abs_delta_action / dt;
    m.velocity_band_fraction = static_cast<double>(in_band) / static_cast<double>(step_count);
    std::size_t ok = 0;
    for (std::size_t t = 0; t < profile_count.size(); ++t) {
      for (const auto& p : profile_sum) ok += (p[t] / profile_count[t] <= limit) ? 1 : 0;
    }
    m.velocity_profile_band_fraction = static_cast<double>(ok) / static_cast<double>(2 * profile_count.size());
  }
  m.theta_dot_variance = mean_of(theta_var);
  m.r_ddot_variance = mean_of(rdd_var);
  return out;
}

}  // namespace cpg_actor
