#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cpg_actor/actors.hpp"
#include "cpg_actor/task.hpp"

using namespace cpg_actor;

namespace {

std::vector<double> random_obs(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(kObservationSize);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("actor names") {
  for (ActorKind k : {ActorKind::kCpgActor, ActorKind::kCpgActorOpenLoop, ActorKind::kMlpActor,
                      ActorKind::kCpgInEnv}) {
    CHECK(parse_actor_kind(actor_name(k)) == k);
    CHECK(make_actor(k, ActorConfig{})->kind() == k);
  }
  CHECK_THROWS_AS(parse_actor_kind("ppo-actor"), std::invalid_argument);
}

TEST_CASE("CPG actor step equals the hand-composed pipeline") {
  const ActorConfig cfg;
  const CpgActor actor(cfg, true);
  auto params = actor.init_params(5);
  std::mt19937_64 noise(6);
  std::normal_distribution<double> n(0.0, 0.3);
  for (std::size_t k = actor.feedback_offset(); k < params.size(); ++k) params[k] += n(noise);

  std::mt19937_64 rng(7);
  std::vector<double> carried(actor.carried_dim()), next(actor.carried_dim()), mean(2);
  actor.reset_state(params, rng, carried);
  const auto obs = random_obs(8);
  actor.act(params, obs, carried, next, mean);

  const auto topo = cfg.topology();
  const std::size_t m = topo.param_count();
  const auto fb = feedback_forward(cfg.feedback, obs, std::span<const double>(params).subspan(m));
  CHECK(fb.xi[0] != 0.0);
  const auto res = cpg_step(topo, CpgState::unpack(carried), std::span<const double>(params).first(m),
                            cfg.command(), fb, cfg.dt);
  CHECK(next == res.state.pack());
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(mean[j] == res.output[j] * cfg.joints.range[j] + cfg.joints.offset[j]);
  }
}

TEST_CASE("zero amplitude maps to the joint offset") {
  const ActorConfig cfg;
  const CpgState zero = CpgState::zeros(2);
  const auto x = cpg_output(zero);
  for (std::size_t j = 0; j < 2; ++j) CHECK(x[j] * cfg.joints.range[j] + cfg.joints.offset[j] == cfg.joints.offset[j]);

  // One step from rest only moves r by dt^2/4 times its acceleration.
  const CpgActor actor(cfg, false);
  const auto params = actor.init_params(1);
  std::vector<double> carried = zero.pack(), next(carried.size()), mean(2);
  actor.act(params, random_obs(2), carried, next, mean);
  const auto d = cpg_derivatives(cfg.topology(), zero, params, cfg.command(), FeedbackSignals::zeros(2));
  for (std::size_t j = 0; j < 2; ++j) {
    const double r1 = 0.25 * cfg.dt * cfg.dt * d.r_ddot[j];
    CHECK(std::abs(mean[j] - cfg.joints.offset[j]) <= std::abs(r1) * cfg.joints.range[j] * (1.0 + 1e-12));
  }
}

TEST_CASE("silent feedback equals the open-loop CPG trajectory") {
  const ActorConfig cfg;
  const CpgActor closed(cfg, true);
  const CpgActor open(cfg, false);
  const auto pc = closed.init_params(3);
  const std::vector<double> po(pc.begin(), pc.begin() + static_cast<std::ptrdiff_t>(open.param_count()));
  std::mt19937_64 rng(4);
  std::vector<double> a(closed.carried_dim()), b, na(a.size()), nb(a.size()), ma(2), mb(2);
  closed.reset_state(pc, rng, a);
  b = a;
  for (int t = 0; t < 500; ++t) {
    const auto obs = random_obs(100 + t);
    closed.act(pc, obs, a, na, ma);
    open.act(po, obs, b, nb, mb);
    REQUIRE(ma == mb);
    a = na;
    b = nb;
  }
}

TEST_CASE("MLP actor") {
  const ActorConfig cfg;
  const MlpActor actor(cfg);
  CHECK(actor.arch().sizes == std::vector<std::size_t>{8, 64, 64, 2});
  const std::vector<double> zero(actor.param_count(), 0.0);
  std::vector<double> mean(2, 1.0);
  actor.act(zero, random_obs(1), {}, {}, mean);
  CHECK(mean == std::vector<double>{0.0, 0.0});
  CHECK(actor.init_params(2) == actor.init_params(2));
}

TEST_CASE("CPG-in-env policy") {
  const ActorConfig cfg;
  const CpgInEnvActor actor(cfg);
  const auto topo = cfg.topology();
  CHECK(actor.action_dim() == topo.param_count());
  CHECK(actor.action_dim() == 14);
  CHECK(actor.carried_dim() == 0);

  SUBCASE("zero weights emit the output bias") {
    std::vector<double> p(actor.param_count(), 0.0);
    const std::size_t last = actor.arch().sizes.size() - 2;
    for (std::size_t k = 0; k < 14; ++k) p[actor.arch().bias_offset(last) + k] = 0.1 * static_cast<double>(k) - 0.5;
    std::vector<double> mean(14);
    for (std::uint64_t s = 0; s < 3; ++s) {
      actor.act(p, random_obs(s), {}, {}, mean);
      for (std::size_t k = 0; k < 14; ++k) CHECK(mean[k] == 0.1 * static_cast<double>(k) - 0.5);
    }
  }

  SUBCASE("constant emissions through the wrapper match a fixed open-loop CPG actor") {
    const HopperEnv env(HopperConfig{}, RewardConfig{});
    CpgEnvTask wrapped(env, cfg);
    HopperTask plain(env);
    const auto v = cfg.warm_start.target.params(topo);
    const CpgActor open(cfg, false);

    wrapped.reset(11);
    plain.reset(11);
    std::vector<double> carried = wrapped.cpg_state()->pack(), next(carried.size()), mean(2);
    for (int t = 0; t < 300; ++t) {
      // Manual composition: one cpg_step with the emitted parameters and no feedback.
      const auto manual = cpg_step(topo, CpgState::unpack(carried), v, cfg.command(),
                                   FeedbackSignals::zeros(2), cfg.dt);
      open.act(v, random_obs(t), carried, next, mean);
      CHECK(next == manual.state.pack());
      const auto rw = wrapped.step(v);
      const auto rp = plain.step(mean);
      REQUIRE(rw.state == rp.state);
      CHECK(rw.reward == rp.reward);
      CHECK(*wrapped.cpg_state() == CpgState::unpack(next));
      carried = next;
      if (rw.done) break;
    }
  }
}

TEST_CASE("warm start") {
  const ActorConfig cfg;
  const CpgInEnvActor actor(cfg);
  const auto target = *actor.warm_start_target();
  std::mt19937_64 rng(21);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> obs(2048 * kObservationSize);
  for (auto& x : obs) x = d(rng);

  SUBCASE("zero epochs leaves the weights") {
    auto p = actor.init_params(1);
    const auto before = p;
    WarmStartConfig w = cfg.warm_start;
    w.epochs = 0;
    const auto res = warm_start(actor, p, obs, target, w, 2);
    CHECK(p == before);
    CHECK(res.epoch_loss.empty());
    CHECK(res.initial_loss > 0.0);
  }
  SUBCASE("the default fit reaches the target") {
    auto p = actor.init_params(1);
    const auto res = warm_start(actor, p, obs, target, cfg.warm_start, 2);
    REQUIRE(res.epoch_loss.size() == 100);
    CHECK(res.epoch_loss.back() < 0.01 * res.initial_loss);
    CHECK(res.holdout_rel_error < 0.05);
  }
  const CpgActor stateful(cfg, true);
  std::vector<double> sp(stateful.param_count());
  CHECK_THROWS(warm_start(stateful, sp, obs, target, cfg.warm_start, 1));
}

TEST_CASE("make_task picks the environment wrapper") {
  const HopperEnv env(HopperConfig{}, RewardConfig{});
  const ActorConfig cfg;
  CHECK(make_task(ActorKind::kCpgActor, env, cfg)->action_dim() == 2);
  CHECK(make_task(ActorKind::kMlpActor, env, cfg)->action_dim() == 2);
  auto t = make_task(ActorKind::kCpgInEnv, env, cfg);
  CHECK(t->action_dim() == 14);
  t->reset(3);
  REQUIRE(t->cpg_state() != nullptr);
  CHECK(t->cpg_state()->r[0] == cfg.warm_start.target.amplitude);
  std::vector<double> bad(14, std::nan(""));
  CHECK_THROWS_AS(t->step(bad), PhysicsFault);
}
