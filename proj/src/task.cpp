#include "cpg_actor/task.hpp"

#include <random>
#include <stdexcept>

#include "cpg_actor/numeric.hpp"

namespace cpg_actor {

Observation HopperTask::reset(std::uint64_t seed) {
  const auto r = env_.reset(seed);
  state_ = r.state;
  return r.observation;
}

StepResult HopperTask::step(std::span<const double> action) {
  if (action.size() != 2) throw std::invalid_argument("hopper action must have 2 entries");
  StepResult res = env_.step(state_, {action[0], action[1]});
  state_ = res.state;
  return res;
}

CpgEnvTask::CpgEnvTask(HopperEnv env, const ActorConfig& cfg)
    : env_(std::move(env)),
      topo_(cfg.topology()),
      cmd_(cfg.command()),
      joints_(cfg.joints),
      dt_(cfg.dt),
      reset_amplitude_(cfg.warm_start.target.amplitude) {
  if (topo_.size() != 2) throw std::invalid_argument("the hopper needs exactly two oscillators");
}

Observation CpgEnvTask::reset(std::uint64_t seed) {
  const auto r = env_.reset(seed);
  state_ = r.state;
  std::mt19937_64 rng(derive_seed(seed, 7));
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  cpg_ = CpgState::zeros(topo_.size());
  for (auto& t : cpg_.theta) t = phase(rng);
  for (auto& r0 : cpg_.r) r0 = reset_amplitude_;
  return r.observation;
}

StepResult CpgEnvTask::step(std::span<const double> action) {
  const CpgStepResult c =
      cpg_step(topo_, cpg_, action, cmd_, FeedbackSignals::zeros(topo_.size()), dt_);
  if (!c.state.finite()) throw PhysicsFault("emitted CPG parameters produced a non-finite state");
  cpg_ = c.state;
  const Vec2 desired{c.output[0] * joints_.range[0] + joints_.offset[0],
                     c.output[1] * joints_.range[1] + joints_.offset[1]};
  StepResult res = env_.step(state_, desired);
  state_ = res.state;
  return res;
}

std::unique_ptr<Task> make_task(ActorKind kind, const HopperEnv& env, const ActorConfig& cfg) {
  if (kind == ActorKind::kCpgInEnv) return std::make_unique<CpgEnvTask>(env, cfg);
  return std::make_unique<HopperTask>(env);
}

}  // namespace cpg_actor
