#pragma once

// Environments as seen by the trainer: an action of the actor's Gaussian
// dimension in, an observation and reward out.

#include <cstdint>
#include <memory>
#include <span>

#include "cpg_actor/actors.hpp"
#include "cpg_actor/cpg.hpp"
#include "cpg_actor/hopper.hpp"

namespace cpg_actor {

class Task {
 public:
  virtual ~Task() = default;

  virtual std::size_t action_dim() const = 0;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::span<const double> action) = 0;

  virtual const HopperState& hopper_state() const = 0;
  // Oscillator state of a CPG living inside the environment, if any.
  virtual const CpgState* cpg_state() const { return nullptr; }
};

// Actions are desired joint positions.
class HopperTask final : public Task {
 public:
  explicit HopperTask(HopperEnv env) : env_(std::move(env)) {}

  std::size_t action_dim() const override { return 2; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  const HopperState& hopper_state() const override { return state_; }

 private:
  HopperEnv env_;
  HopperState state_;
};

// Actions are CPG parameter vectors. Each control step runs one open-loop
// cpg_step with the emitted parameters and maps its output to joint targets.
class CpgEnvTask final : public Task {
 public:
  CpgEnvTask(HopperEnv env, const ActorConfig& cfg);

  std::size_t action_dim() const override { return topo_.param_count(); }
  Observation reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  const HopperState& hopper_state() const override { return state_; }
  const CpgState* cpg_state() const override { return &cpg_; }

 private:
  HopperEnv env_;
  CpgTopology topo_;
  CommandSignal cmd_;
  JointMapping joints_;
  double dt_;
  double reset_amplitude_;
  HopperState state_;
  CpgState cpg_;
};

std::unique_ptr<Task> make_task(ActorKind kind, const HopperEnv& env, const ActorConfig& cfg);

}  // namespace cpg_actor
