#include "cpg_actor/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cpg_actor/numeric.hpp"

namespace cpg_actor {

namespace {

const double kHalfLogTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

void PpoConfig::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("ppo.") + what); };
  if (!(clip > 0.0 && clip < 1.0)) fail("clip must be in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must be in [0, 1]");
  if (!(lam >= 0.0 && lam <= 1.0)) fail("lam must be in [0, 1]");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (minibatch == 0) fail("minibatch must be > 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (rollout == 0) fail("rollout must be > 0");
  if (workers == 0) fail("workers must be > 0");
  if (!(vf_coef > 0.0)) fail("vf_coef must be > 0");
  if (!(ent_coef >= 0.0)) fail("ent_coef must be >= 0");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be > 0");
  if (!std::isfinite(init_log_std)) fail("init_log_std must be finite");
  for (std::size_t h : critic_hidden) {
    if (h == 0) fail("critic_hidden sizes must be > 0");
  }
}

double gaussian_log_prob(std::span<const double> action, std::span<const double> mean,
                         std::span<const double> log_std) {
  if (action.size() != mean.size() || log_std.size() != mean.size()) {
    throw std::invalid_argument("gaussian_log_prob: dimension mismatch");
  }
  // Same operation order as the taped loss.
  double s = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    s += (z * z) * -0.5 + -log_std[i];
  }
  return s + -kHalfLogTwoPi * static_cast<double>(mean.size());
}

double gaussian_entropy(std::span<const double> log_std) {
  double s = 0.0;
  for (double l : log_std) s += l;
  return s + (0.5 + kHalfLogTwoPi) * static_cast<double>(log_std.size());
}

GaussianSample sample_action(std::span<const double> mean, std::span<const double> log_std,
                             std::mt19937_64& rng) {
  if (log_std.size() != mean.size()) throw std::invalid_argument("sample_action: dimension mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianSample out;
  out.action.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    out.action[i] = mean[i] + std::exp(log_std[i]) * normal(rng);
  }
  out.log_prob = gaussian_log_prob(out.action, mean, log_std);
  return out;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const double> dones, double gamma, double lam) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) {
    throw std::invalid_argument("gae: need n rewards, n dones and n + 1 values");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = 1.0 - dones[k];
    const double delta = rewards[k] + gamma * values[k + 1] * live - values[k];
    next = delta + gamma * lam * live * next;
    out.advantages[k] = next;
    out.returns[k] = next + values[k];
  }
  return out;
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  const auto n = static_cast<double>(adv.size());
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n) + 1e-8;
  for (double& a : adv) a = (a - mean) / sd;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoLossTerms ppo_loss(std::span<const double> ratios, std::span<const double> advantages,
                      std::span<const double> values, std::span<const double> returns,
                      std::span<const double> entropy, const PpoConfig& cfg) {
  const std::size_t n = ratios.size();
  if (advantages.size() != n || values.size() != n || returns.size() != n ||
      entropy.size() != n || n == 0) {
    throw std::invalid_argument("ppo_loss: dimension mismatch");
  }
  PpoLossTerms t;
  for (std::size_t i = 0; i < n; ++i) {
    t.surrogate += clipped_surrogate(ratios[i], advantages[i], cfg.clip);
    t.value_loss += (values[i] - returns[i]) * (values[i] - returns[i]);
    t.entropy += entropy[i];
  }
  const auto count = static_cast<double>(n);
  t.surrogate /= count;
  t.value_loss /= count;
  t.entropy /= count;
  t.loss = -t.surrogate + cfg.vf_coef * t.value_loss - cfg.ent_coef * t.entropy;
  return t;
}

// Agent

Agent::Agent(std::unique_ptr<Actor> actor, std::vector<std::size_t> critic_hidden)
    : actor_(std::move(actor)) {
  critic_.sizes.push_back(kObservationSize);
  critic_.sizes.insert(critic_.sizes.end(), critic_hidden.begin(), critic_hidden.end());
  critic_.sizes.push_back(1);
  critic_.validate();
}

std::vector<double> Agent::init_params(std::uint64_t seed, double init_log_std) const {
  std::vector<double> p = actor_->init_params(seed);
  p.insert(p.end(), action_dim(), init_log_std);
  std::mt19937_64 rng(derive_seed(seed, 4));
  const auto c = init_mlp(critic_, rng, std::sqrt(2.0), 1.0);
  p.insert(p.end(), c.begin(), c.end());
  return p;
}

std::span<const double> Agent::actor_params(std::span<const double> all) const {
  return all.first(actor_->param_count());
}

std::span<const double> Agent::log_std(std::span<const double> all) const {
  return all.subspan(log_std_offset(), action_dim());
}

std::span<const double> Agent::critic_params(std::span<const double> all) const {
  return all.subspan(critic_offset(), critic_.param_count());
}

double Agent::value(std::span<const double> all, std::span<const double> obs) const {
  double v = 0.0;
  mlp_forward(critic_, critic_params(all), obs, std::span<double>(&v, 1));
  return v;
}

ad::Var record_sample_loss(ad::Tape& tape, const Agent& agent, const ad::ParamRef& params,
                           const PpoSample& sample, const PpoConfig& cfg, SampleTerms* terms) {
  if (params.value.size() != agent.param_count()) {
    throw std::invalid_argument("record_sample_loss: parameter length mismatch");
  }
  const std::size_t dim = agent.action_dim();
  const ad::Var obs = tape.constant(sample.obs);
  const ad::Var mean = agent.actor().record_mean(
      tape, params.slice(0, agent.actor().param_count()), obs, sample.carried);
  const ad::Var ls = tape.param(params.slice(agent.log_std_offset(), dim));

  const ad::Var z = tape.mul(tape.sub(tape.constant(sample.action), mean), tape.exp(tape.neg(ls)));
  const ad::Var per = tape.add(tape.mul(tape.mul(z, z), -0.5), tape.neg(ls));
  const ad::Var log_prob = tape.add(tape.sum(per), -kHalfLogTwoPi * static_cast<double>(dim));

  const ad::Var ratio = tape.exp(tape.add(log_prob, -sample.old_log_prob));
  const ad::Var adv = tape.constant(sample.advantage);
  const ad::Var surrogate = tape.min(tape.mul(ratio, adv),
                                     tape.mul(tape.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv));

  const ad::Var value =
      record_mlp(tape, agent.critic(), params.slice(agent.critic_offset(), agent.critic().param_count()), obs);
  const ad::Var err = tape.add(value, -sample.ret);
  const ad::Var value_loss = tape.mul(err, err);
  const ad::Var entropy = tape.add(tape.sum(ls), (0.5 + kHalfLogTwoPi) * static_cast<double>(dim));

  ad::Var loss = tape.add(tape.neg(surrogate), tape.mul(value_loss, cfg.vf_coef));
  if (cfg.ent_coef != 0.0) loss = tape.sub(loss, tape.mul(entropy, cfg.ent_coef));

  if (terms != nullptr) {
    terms->ratio = tape.scalar(ratio);
    terms->surrogate = tape.scalar(surrogate);
    terms->value_loss = tape.scalar(value_loss);
    terms->entropy = tape.scalar(entropy);
  }
  return loss;
}

SampleTerms accumulate_sample_gradient(ad::Tape& tape, const Agent& agent,
                                       std::span<const double> params, std::span<double> grad,
                                       const PpoSample& sample, const PpoConfig& cfg,
                                       double weight) {
  tape.clear();
  SampleTerms terms;
  const ad::Var loss = record_sample_loss(tape, agent, ad::ParamRef{params, grad}, sample, cfg, &terms);
  tape.backward(loss, weight);
  return terms;
}

// RolloutBuffer

RolloutBuffer::RolloutBuffer(std::size_t workers_, std::size_t length_, std::size_t obs_dim_,
                             std::size_t carried_dim_, std::size_t action_dim_)
    : workers(workers_),
      length(length_),
      obs_dim(obs_dim_),
      carried_dim(carried_dim_),
      action_dim(action_dim_) {
  const std::size_t n = workers * length;
  obs.assign(n * obs_dim, 0.0);
  raw_obs.assign(n * obs_dim, 0.0);
  carried.assign(n * carried_dim, 0.0);
  actions.assign(n * action_dim, 0.0);
  log_probs.assign(n, 0.0);
  rewards.assign(n, 0.0);
  values.assign(n, 0.0);
  dones.assign(n, 0.0);
  bootstrap.assign(workers, 0.0);
}

void RolloutBuffer::finish(double gamma, double lam) {
  advantages.assign(size(), 0.0);
  returns.assign(size(), 0.0);
  std::vector<double> vals(length + 1);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t base = index(w, 0);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(base), length, vals.begin());
    vals[length] = bootstrap[w];
    const auto res = gae(std::span(rewards).subspan(base, length), vals,
                         std::span(dones).subspan(base, length), gamma, lam);
    std::copy(res.advantages.begin(), res.advantages.end(), advantages.begin() + static_cast<std::ptrdiff_t>(base));
    std::copy(res.returns.begin(), res.returns.end(), returns.begin() + static_cast<std::ptrdiff_t>(base));
  }
  normalize_advantages(advantages);
}

PpoSample RolloutBuffer::sample(std::size_t i) const {
  PpoSample s;
  s.obs = std::span(obs).subspan(i * obs_dim, obs_dim);
  s.carried = std::span(carried).subspan(i * carried_dim, carried_dim);
  s.action = std::span(actions).subspan(i * action_dim, action_dim);
  s.old_log_prob = log_probs[i];
  s.advantage = advantages[i];
  s.ret = returns[i];
  return s;
}

}  // namespace cpg_actor
