#include "cpg_actor/actors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cpg_actor/numeric.hpp"
#include "cpg_actor/optim.hpp"

namespace cpg_actor {

namespace {

constexpr std::string_view kNames[] = {"cpg-actor", "cpg-actor-open-loop", "mlp-actor",
                                       "cpg-in-env"};

void check_sizes(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) +
                                " entries, got " + std::to_string(got));
  }
}

MlpArch policy_arch(const std::vector<std::size_t>& hidden, std::size_t out) {
  MlpArch arch;
  arch.sizes.push_back(kObservationSize);
  arch.sizes.insert(arch.sizes.end(), hidden.begin(), hidden.end());
  arch.sizes.push_back(out);
  arch.validate();
  return arch;
}

}  // namespace

std::string_view actor_name(ActorKind kind) { return kNames[static_cast<int>(kind)]; }

ActorKind parse_actor_kind(std::string_view name) {
  for (int k = 0; k < 4; ++k) {
    if (kNames[k] == name) return static_cast<ActorKind>(k);
  }
  throw std::invalid_argument("unknown actor '" + std::string(name) +
                              "' (expected cpg-actor, cpg-actor-open-loop, mlp-actor or "
                              "cpg-in-env)");
}

std::vector<double> WarmStartTarget::params(const CpgTopology& topo) const {
  return make_cpg_params(topo, frequency_hz, amplitude, convergence, weight, phase);
}

void Actor::reset_state(std::span<const double>, std::mt19937_64&, std::span<double> carried) const {
  check_sizes(carried.size(), carried_dim(), "reset_state");
}

// CpgActor

CpgActor::CpgActor(const ActorConfig& cfg, bool closed_loop)
    : topo_(cfg.topology()),
      feedback_(cfg.feedback),
      cmd_(cfg.command()),
      init_(cfg.cpg_init),
      joints_(cfg.joints),
      dt_(cfg.dt),
      closed_loop_(closed_loop) {
  if (feedback_.oscillators != topo_.size()) {
    throw std::invalid_argument("feedback oscillator count differs from the CPG size");
  }
  if (topo_.size() != 2) throw std::invalid_argument("the hopper needs exactly two oscillators");
  if (!(dt_ > 0.0)) throw std::invalid_argument("cpg dt must be positive");
}

std::size_t CpgActor::param_count() const {
  return topo_.param_count() + (closed_loop_ ? feedback_.param_count() : 0);
}

std::vector<double> CpgActor::init_params(std::uint64_t seed) const {
  std::vector<double> p = init_cpg(topo_, derive_seed(seed, 0), init_).params.v;
  if (closed_loop_) {
    const auto w = init_feedback(derive_seed(seed, 1), feedback_);
    p.insert(p.end(), w.begin(), w.end());
  }
  return p;
}

void CpgActor::reset_state(std::span<const double> params, std::mt19937_64& rng,
                           std::span<double> carried) const {
  check_sizes(carried.size(), carried_dim(), "reset_state");
  check_sizes(params.size(), param_count(), "reset_state params");
  reset_cpg_state(topo_, params.first(topo_.param_count()), cmd_, rng).pack_into(carried);
}

CpgStepResult CpgActor::step(std::span<const double> params, std::span<const double> obs,
                             const CpgState& state) const {
  check_sizes(params.size(), param_count(), "cpg actor params");
  const std::size_t m = topo_.param_count();
  const FeedbackSignals fb = closed_loop_
                                 ? feedback_forward(feedback_, obs, params.subspan(m))
                                 : FeedbackSignals::zeros(topo_.size());
  return cpg_step(topo_, state, params.first(m), cmd_, fb, dt_);
}

void CpgActor::act(std::span<const double> params, std::span<const double> obs,
                   std::span<const double> carried_in, std::span<double> carried_out,
                   std::span<double> mean) const {
  check_sizes(carried_in.size(), carried_dim(), "carried state");
  check_sizes(carried_out.size(), carried_dim(), "carried state");
  check_sizes(mean.size(), 2, "action mean");
  const CpgStepResult res = step(params, obs, CpgState::unpack(carried_in));
  res.state.pack_into(carried_out);
  for (std::size_t j = 0; j < 2; ++j) mean[j] = res.output[j] * joints_.range[j] + joints_.offset[j];
}

ad::Var CpgActor::record_mean(ad::Tape& tape, const ad::ParamRef& params, ad::Var obs,
                              std::span<const double> carried_in) const {
  check_sizes(params.value.size(), param_count(), "cpg actor params");
  check_sizes(carried_in.size(), carried_dim(), "carried state");
  const std::size_t m = topo_.param_count();
  const ad::Var v = tape.param(params.slice(0, m));
  ad::Var xi, kappa;
  if (closed_loop_) {
    const TapedFeedback fb =
        record_feedback(tape, feedback_, obs, params.slice(m, feedback_.param_count()));
    xi = fb.xi;
    kappa = fb.kappa;
  } else {
    xi = kappa = tape.constant(std::vector<double>(topo_.size(), 0.0));
  }
  const TapedCpgState prev = tape_cpg_state(tape, CpgState::unpack(carried_in), false);
  const TapedCpgStep step = record_cpg_step(tape, topo_, v, prev, cmd_, xi, kappa, dt_);
  const ad::Var range = tape.constant({joints_.range[0], joints_.range[1]});
  const ad::Var offset = tape.constant({joints_.offset[0], joints_.offset[1]});
  return tape.add(tape.mul(step.output, range), offset);
}

// MlpActor

MlpActor::MlpActor(const ActorConfig& cfg)
    : arch_(policy_arch(cfg.mlp_hidden, 2)), output_gain_(cfg.mlp_output_gain) {}

std::vector<double> MlpActor::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(derive_seed(seed, 2));
  return init_mlp(arch_, rng, std::sqrt(2.0), output_gain_);
}

void MlpActor::act(std::span<const double> params, std::span<const double> obs,
                   std::span<const double>, std::span<double>, std::span<double> mean) const {
  mlp_forward(arch_, params, obs, mean);
}

ad::Var MlpActor::record_mean(ad::Tape& tape, const ad::ParamRef& params, ad::Var obs,
                              std::span<const double>) const {
  return record_mlp(tape, arch_, params, obs);
}

// CpgInEnvActor

CpgInEnvActor::CpgInEnvActor(const ActorConfig& cfg)
    : arch_(policy_arch(cfg.mlp_hidden, cfg.topology().param_count())),
      output_gain_(cfg.mlp_output_gain),
      target_(cfg.warm_start.target.params(cfg.topology())) {}

std::vector<double> CpgInEnvActor::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(derive_seed(seed, 3));
  return init_mlp(arch_, rng, std::sqrt(2.0), output_gain_);
}

void CpgInEnvActor::act(std::span<const double> params, std::span<const double> obs,
                        std::span<const double>, std::span<double>,
                        std::span<double> mean) const {
  mlp_forward(arch_, params, obs, mean);
}

ad::Var CpgInEnvActor::record_mean(ad::Tape& tape, const ad::ParamRef& params, ad::Var obs,
                                   std::span<const double>) const {
  return record_mlp(tape, arch_, params, obs);
}

std::unique_ptr<Actor> make_actor(ActorKind kind, const ActorConfig& cfg) {
  switch (kind) {
    case ActorKind::kCpgActor:
      return std::make_unique<CpgActor>(cfg, true);
    case ActorKind::kCpgActorOpenLoop:
      return std::make_unique<CpgActor>(cfg, false);
    case ActorKind::kMlpActor:
      return std::make_unique<MlpActor>(cfg);
    case ActorKind::kCpgInEnv:
      return std::make_unique<CpgInEnvActor>(cfg);
  }
  throw std::invalid_argument("make_actor: bad kind");
}

// Warm start

namespace {

double sample_mse(const Actor& actor, std::span<const double> params,
                  std::span<const double> obs, std::span<const double> target) {
  std::vector<double> mean(actor.action_dim());
  actor.act(params, obs, {}, {}, mean);
  double s = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) s += (mean[k] - target[k]) * (mean[k] - target[k]);
  return s / static_cast<double>(mean.size());
}

}  // namespace

WarmStartResult warm_start(const Actor& actor, std::span<double> params,
                           std::span<const double> observations,
                           std::span<const double> target, const WarmStartConfig& cfg,
                           std::uint64_t seed) {
  if (actor.carried_dim() != 0) throw std::invalid_argument("warm_start needs a stateless actor");
  check_sizes(params.size(), actor.param_count(), "warm_start params");
  check_sizes(target.size(), actor.action_dim(), "warm_start target");
  if (observations.size() % kObservationSize != 0 || observations.empty()) {
    throw std::invalid_argument("warm_start: observations must be whole rows");
  }
  if (cfg.epochs < 0 || cfg.minibatch == 0 || !(cfg.lr > 0.0)) {
    throw std::invalid_argument("warm_start: bad configuration");
  }
  const std::size_t rows = observations.size() / kObservationSize;
  const auto holdout = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(rows)));
  const std::size_t train = std::max<std::size_t>(rows - holdout, 1);
  auto row = [&](std::size_t k) { return observations.subspan(k * kObservationSize, kObservationSize); };

  WarmStartResult out;
  for (std::size_t k = 0; k < train; ++k) out.initial_loss += sample_mse(actor, params, row(k), target);
  out.initial_loss /= static_cast<double>(train);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam(params.size());
  const AdamConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, 0.0};
  std::vector<double> grad(params.size());
  ad::Tape tape;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < train; start += cfg.minibatch) {
      const std::size_t stop = std::min(train, start + cfg.minibatch);
      const auto count = static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        tape.clear();
        const ad::ParamRef p{params, grad};
        const ad::Var obs = tape.constant(row(order[k]));
        const ad::Var diff = tape.sub(actor.record_mean(tape, p, obs, {}), tape.constant(target));
        const ad::Var loss = tape.mean(tape.mul(diff, diff));
        total += tape.scalar(loss);
        tape.backward(loss, 1.0 / count);
      }
      adam_update(params, grad, adam, acfg);
    }
    out.epoch_loss.push_back(total / static_cast<double>(train));
  }

  double tnorm = 0.0;
  for (double t : target) tnorm += t * t;
  tnorm = std::sqrt(tnorm);
  std::vector<double> mean(actor.action_dim());
  const std::size_t first_holdout = holdout > 0 ? rows - holdout : 0;
  for (std::size_t k = first_holdout; k < rows; ++k) {
    actor.act(params, row(k), {}, {}, mean);
    double e = 0.0;
    for (std::size_t j = 0; j < mean.size(); ++j) e += (mean[j] - target[j]) * (mean[j] - target[j]);
    out.holdout_rel_error = std::max(out.holdout_rel_error, std::sqrt(e) / tnorm);
  }
  return out;
}

}  // namespace cpg_actor
