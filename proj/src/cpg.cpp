#include "cpg_actor/cpg.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cpg_actor/numeric.hpp"

namespace cpg_actor {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}

double command_for(const CommandSignal& cmd, std::size_t i) {
  return cmd.d.size() == 1 ? cmd.d[0] : cmd.d[i];
}

void check_command(const CpgTopology& topo, const CommandSignal& cmd) {
  require(cmd.d.size() == 1 || cmd.d.size() == topo.size(),
          "command must have one entry or one per oscillator");
}

void check_state(const CpgTopology& topo, const CpgState& s) {
  const std::size_t n = topo.size();
  require(s.theta.size() == n && s.theta_dot.size() == n && s.r.size() == n &&
              s.r_dot.size() == n && s.r_ddot.size() == n,
          "state dimension does not match topology");
}

void check_params(const CpgTopology& topo, std::span<const double> v) {
  require(v.size() == topo.param_count(), "parameter vector length does not match topology");
}

void check_feedback(const CpgTopology& topo, const FeedbackSignals& fb) {
  require(fb.xi.size() == topo.size() && fb.kappa.size() == topo.size(),
          "feedback must have one xi and one kappa per oscillator");
}

}  // namespace

CpgTopology::CpgTopology(std::vector<std::vector<std::uint8_t>> adjacency)
    : n_(adjacency.size()) {
  require(n_ >= 1, "topology needs at least one oscillator");
  adjacency_.assign(n_ * n_, 0);
  for (std::size_t i = 0; i < n_; ++i) {
    require(adjacency[i].size() == n_, "adjacency must be square");
    for (std::size_t j = 0; j < n_; ++j) {
      require(adjacency[i][j] <= 1, "adjacency must be binary");
      adjacency_[i * n_ + j] = adjacency[i][j];
    }
    require(adjacency[i][i] == 0, "adjacency diagonal must be zero");
  }

  std::size_t next = 0;
  auto block = [&](std::vector<std::size_t>& dst, std::size_t count) {
    dst.resize(count);
    for (auto& k : dst) k = next++;
  };
  block(layout_.freq_gain, n_);
  block(layout_.freq_bias, n_);
  block(layout_.amp_gain, n_);
  block(layout_.amp_bias, n_);
  block(layout_.convergence, n_);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (coupled(i, j)) pairs.emplace_back(i, j);
    }
  }
  block(layout_.coupling_weight, pairs.size());
  block(layout_.coupling_phase, pairs.size());
  m_ = next;

  for (std::size_t e = 0; e < pairs.size(); ++e) {
    edges_.push_back({pairs[e].first, pairs[e].second, layout_.coupling_weight[e],
                      layout_.coupling_phase[e]});
    edge_targets_.push_back(pairs[e].first);
    edge_sources_.push_back(pairs[e].second);
  }
}

CpgTopology CpgTopology::fully_coupled(std::size_t n) {
  std::vector<std::vector<std::uint8_t>> adj(n, std::vector<std::uint8_t>(n, 1));
  for (std::size_t i = 0; i < n; ++i) adj[i][i] = 0;
  return CpgTopology(std::move(adj));
}

CpgState CpgState::zeros(std::size_t n) {
  std::vector<double> z(n, 0.0);
  return {z, z, z, z, z};
}

bool CpgState::finite() const {
  for (const auto* vec : {&theta, &theta_dot, &r, &r_dot, &r_ddot}) {
    for (double x : *vec) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::vector<double> CpgState::pack() const {
  std::vector<double> out(5 * size());
  pack_into(out);
  return out;
}

void CpgState::pack_into(std::span<double> out) const {
  const std::size_t n = size();
  require(out.size() == 5 * n, "packed state must hold 5N entries");
  std::size_t k = 0;
  for (const auto* vec : {&theta, &theta_dot, &r, &r_dot, &r_ddot}) {
    for (std::size_t i = 0; i < n; ++i) out[k++] = (*vec)[i];
  }
}

CpgState CpgState::unpack(std::span<const double> flat) {
  require(flat.size() % 5 == 0, "packed state length must be a multiple of 5");
  const std::size_t n = flat.size() / 5;
  CpgState s;
  std::size_t k = 0;
  for (auto* vec : {&s.theta, &s.theta_dot, &s.r, &s.r_dot, &s.r_ddot}) {
    vec->assign(flat.begin() + k, flat.begin() + k + n);
    k += n;
  }
  return s;
}

std::vector<double> intrinsic_frequency(const CpgTopology& topo, std::span<const double> v,
                                        const CommandSignal& cmd) {
  check_params(topo, v);
  check_command(topo, cmd);
  const auto& L = topo.layout();
  std::vector<double> nu(topo.size());
  for (std::size_t i = 0; i < nu.size(); ++i) {
    nu[i] = softplus(v[L.freq_gain[i]] * command_for(cmd, i) + v[L.freq_bias[i]]);
  }
  return nu;
}

std::vector<double> intrinsic_amplitude(const CpgTopology& topo, std::span<const double> v,
                                        const CommandSignal& cmd) {
  check_params(topo, v);
  check_command(topo, cmd);
  const auto& L = topo.layout();
  std::vector<double> rho(topo.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    rho[i] = softplus(v[L.amp_gain[i]] * command_for(cmd, i) + v[L.amp_bias[i]]);
  }
  return rho;
}

std::vector<double> convergence_rate(const CpgTopology& topo, std::span<const double> v) {
  check_params(topo, v);
  const auto& L = topo.layout();
  std::vector<double> a(topo.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = softplus(v[L.convergence[i]]) + kConvergenceFloor;
  }
  return a;
}

CpgDerivatives cpg_derivatives(const CpgTopology& topo, const CpgState& state,
                               std::span<const double> v, const CommandSignal& cmd,
                               const FeedbackSignals& fb) {
  check_state(topo, state);
  check_feedback(topo, fb);
  const std::size_t n = topo.size();
  const auto nu = intrinsic_frequency(topo, v, cmd);
  const auto rho = intrinsic_amplitude(topo, v, cmd);
  const auto a = convergence_rate(topo, v);

  CpgDerivatives d;
  d.zeta.assign(n, 0.0);
  for (const auto& e : topo.edges()) {
    const double arg = (state.theta[e.source] - state.theta[e.target]) - v[e.phase_index];
    d.zeta[e.target] += (state.r[e.source] * v[e.weight_index]) * std::sin(arg);
  }
  d.theta_dot.resize(n);
  d.r_ddot.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.theta_dot[i] = kTwoPi * nu[i] + d.zeta[i] + fb.xi[i];
    const double inner = (a[i] * 0.25) * (rho[i] - state.r[i]) - state.r_dot[i];
    d.r_ddot[i] = a[i] * inner + fb.kappa[i];
  }
  return d;
}

CpgState cpg_integrate(const CpgState& state, const CpgDerivatives& next, double dt) {
  require(dt > 0.0, "dt must be positive");
  const std::size_t n = state.size();
  require(next.theta_dot.size() == n && next.r_ddot.size() == n,
          "derivative dimension does not match state");
  const double half = dt * 0.5;
  CpgState out;
  out.theta.resize(n);
  out.r_dot.resize(n);
  out.r.resize(n);
  out.theta_dot = next.theta_dot;
  out.r_ddot = next.r_ddot;
  for (std::size_t i = 0; i < n; ++i) {
    out.theta[i] = state.theta[i] + (state.theta_dot[i] + next.theta_dot[i]) * half;
    out.r_dot[i] = state.r_dot[i] + (state.r_ddot[i] + next.r_ddot[i]) * half;
    out.r[i] = state.r[i] + (state.r_dot[i] + out.r_dot[i]) * half;
  }
  return out;
}

std::vector<double> cpg_output(const CpgState& state) {
  std::vector<double> x(state.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = state.r[i] * std::cos(state.theta[i]);
  return x;
}

CpgStepResult cpg_step(const CpgTopology& topo, const CpgState& state,
                       std::span<const double> v, const CommandSignal& cmd,
                       const FeedbackSignals& fb, double dt) {
  CpgStepResult res;
  res.derivatives = cpg_derivatives(topo, state, v, cmd, fb);
  res.state = cpg_integrate(state, res.derivatives, dt);
  res.output = cpg_output(res.state);
  return res;
}

std::vector<CpgStepResult> cpg_unroll(const CpgTopology& topo, const CpgState& initial,
                                      std::span<const double> v, const CommandSignal& cmd,
                                      std::span<const FeedbackSignals> fbs, double dt) {
  std::vector<CpgStepResult> out;
  out.reserve(fbs.size());
  const CpgState* s = &initial;
  for (const auto& fb : fbs) {
    out.push_back(cpg_step(topo, *s, v, cmd, fb, dt));
    s = &out.back().state;
  }
  return out;
}

BatchStepResult batch_cpg_step(const CpgTopology& topo, std::span<const CpgState> states,
                               std::span<const double> v,
                               std::span<const CommandSignal> cmds,
                               std::span<const FeedbackSignals> fbs, double dt) {
  const std::size_t batch = states.size();
  require(batch >= 1, "batch must not be empty");
  require(cmds.size() == batch && fbs.size() == batch, "ragged batch");
  require(dt > 0.0, "dt must be positive");
  check_params(topo, v);
  const std::size_t n = topo.size();
  for (std::size_t b = 0; b < batch; ++b) {
    check_state(topo, states[b]);
    check_feedback(topo, fbs[b]);
    check_command(topo, cmds[b]);
  }
  const auto& L = topo.layout();

  // Row-major B x N blocks.
  auto block = [&] { return std::vector<double>(batch * n); };
  auto theta = block(), theta_dot = block(), r = block(), r_dot = block(), r_ddot = block();
  auto d = block(), xi = block(), kappa = block();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = b * n + i;
      theta[k] = states[b].theta[i];
      theta_dot[k] = states[b].theta_dot[i];
      r[k] = states[b].r[i];
      r_dot[k] = states[b].r_dot[i];
      r_ddot[k] = states[b].r_ddot[i];
      d[k] = command_for(cmds[b], i);
      xi[k] = fbs[b].xi[i];
      kappa[k] = fbs[b].kappa[i];
    }
  }

  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = softplus(v[L.convergence[i]]) + kConvergenceFloor;

  auto zeta = block();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t row = b * n;
    for (const auto& e : topo.edges()) {
      const double arg = (theta[row + e.source] - theta[row + e.target]) - v[e.phase_index];
      zeta[row + e.target] += (r[row + e.source] * v[e.weight_index]) * std::sin(arg);
    }
  }

  auto new_theta_dot = block(), new_r_ddot = block();
  for (std::size_t k = 0; k < batch * n; ++k) {
    const std::size_t i = k % n;
    const double nu = softplus(v[L.freq_gain[i]] * d[k] + v[L.freq_bias[i]]);
    const double rho = softplus(v[L.amp_gain[i]] * d[k] + v[L.amp_bias[i]]);
    new_theta_dot[k] = kTwoPi * nu + zeta[k] + xi[k];
    const double inner = (a[i] * 0.25) * (rho - r[k]) - r_dot[k];
    new_r_ddot[k] = a[i] * inner + kappa[k];
  }

  const double half = dt * 0.5;
  BatchStepResult out;
  out.states.resize(batch);
  out.outputs.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    CpgState& s = out.states[b];
    s.theta.resize(n);
    s.theta_dot.resize(n);
    s.r.resize(n);
    s.r_dot.resize(n);
    s.r_ddot.resize(n);
    out.outputs[b].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = b * n + i;
      s.theta[i] = theta[k] + (theta_dot[k] + new_theta_dot[k]) * half;
      s.r_dot[i] = r_dot[k] + (r_ddot[k] + new_r_ddot[k]) * half;
      s.r[i] = r[k] + (r_dot[k] + s.r_dot[i]) * half;
      s.theta_dot[i] = new_theta_dot[k];
      s.r_ddot[i] = new_r_ddot[k];
      out.outputs[b][i] = s.r[i] * std::cos(s.theta[i]);
    }
  }
  return out;
}

std::vector<double> make_cpg_params(const CpgTopology& topo, double frequency_hz,
                                    double amplitude, double convergence, double weight,
                                    double phase) {
  require(frequency_hz > 0.0 && amplitude > 0.0, "frequency and amplitude must be positive");
  require(convergence > kConvergenceFloor, "convergence must exceed the floor");
  const auto& L = topo.layout();
  std::vector<double> v(topo.param_count(), 0.0);
  for (std::size_t i = 0; i < topo.size(); ++i) {
    v[L.freq_bias[i]] = softplus_inverse(frequency_hz);
    v[L.amp_bias[i]] = softplus_inverse(amplitude);
    v[L.convergence[i]] = softplus_inverse(convergence - kConvergenceFloor);
  }
  for (const auto& e : topo.edges()) {
    v[e.weight_index] = weight;
    v[e.phase_index] = e.target < e.source ? phase : -phase;
  }
  return v;
}

CpgInit init_cpg(const CpgTopology& topo, std::uint64_t seed, const CpgInitConfig& cfg) {
  require(cfg.frequency_hz > 0.0 && cfg.amplitude > 0.0, "init targets must be positive");
  require(cfg.convergence > kConvergenceFloor, "init convergence must exceed the floor");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gain(0.0, cfg.gain_std);
  std::normal_distribution<double> coupling(0.0, cfg.coupling_std);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);

  const auto& L = topo.layout();
  CpgInit out;
  auto& v = out.params.v;
  v.assign(topo.param_count(), 0.0);
  for (std::size_t i = 0; i < topo.size(); ++i) v[L.freq_gain[i]] = gain(rng);
  for (std::size_t i = 0; i < topo.size(); ++i) v[L.amp_gain[i]] = gain(rng);
  for (std::size_t i = 0; i < topo.size(); ++i) {
    v[L.freq_bias[i]] = softplus_inverse(cfg.frequency_hz) - v[L.freq_gain[i]] * cfg.command;
    v[L.amp_bias[i]] = softplus_inverse(cfg.amplitude) - v[L.amp_gain[i]] * cfg.command;
    v[L.convergence[i]] = softplus_inverse(cfg.convergence - kConvergenceFloor);
  }
  for (const auto& e : topo.edges()) {
    const double w = coupling(rng);
    v[e.weight_index] = cfg.mode == CpgInitMode::kZeroCoupling ? 0.0 : w;
  }
  for (const auto& e : topo.edges()) v[e.phase_index] = phase(rng);

  out.state = reset_cpg_state(topo, v, CommandSignal{{cfg.command}}, rng);
  return out;
}

CpgState reset_cpg_state(const CpgTopology& topo, std::span<const double> v,
                         const CommandSignal& cmd, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  CpgState s = CpgState::zeros(topo.size());
  for (auto& t : s.theta) t = phase(rng);
  s.r = intrinsic_amplitude(topo, v, cmd);
  return s;
}

TapedCpgState tape_cpg_state(ad::Tape& tape, const CpgState& state, bool differentiable) {
  auto leaf = [&](const std::vector<double>& x) {
    return differentiable ? tape.input(x) : tape.constant(x);
  };
  return {leaf(state.theta), leaf(state.theta_dot), leaf(state.r), leaf(state.r_dot),
          leaf(state.r_ddot)};
}

TapedCpgStep record_cpg_step(ad::Tape& tape, const CpgTopology& topo, ad::Var v,
                             const TapedCpgState& prev, const CommandSignal& cmd,
                             ad::Var xi, ad::Var kappa, double dt) {
  require(dt > 0.0, "dt must be positive");
  require(tape.size(v) == topo.param_count(), "parameter vector length does not match topology");
  check_command(topo, cmd);
  const std::size_t n = topo.size();
  for (ad::Var s : {prev.theta, prev.theta_dot, prev.r, prev.r_dot, prev.r_ddot, xi, kappa}) {
    require(tape.size(s) == n, "taped state/feedback dimension does not match topology");
  }
  const auto& L = topo.layout();

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = command_for(cmd, i);
  const ad::Var dv = tape.constant(d);

  const ad::Var nu = tape.softplus(
      tape.add(tape.mul(tape.gather(v, L.freq_gain), dv), tape.gather(v, L.freq_bias)));
  const ad::Var rho = tape.softplus(
      tape.add(tape.mul(tape.gather(v, L.amp_gain), dv), tape.gather(v, L.amp_bias)));
  const ad::Var a = tape.add(tape.softplus(tape.gather(v, L.convergence)), kConvergenceFloor);

  ad::Var theta_dot;
  if (topo.edges().empty()) {
    theta_dot = tape.add(tape.add(tape.mul(nu, kTwoPi), tape.constant(std::vector<double>(n, 0.0))), xi);
  } else {
    const ad::Var arg = tape.sub(tape.sub(tape.gather(prev.theta, topo.edge_sources()),
                                          tape.gather(prev.theta, topo.edge_targets())),
                                 tape.gather(v, L.coupling_phase));
    const ad::Var term = tape.mul(
        tape.mul(tape.gather(prev.r, topo.edge_sources()), tape.gather(v, L.coupling_weight)),
        tape.sin(arg));
    const ad::Var zeta = tape.scatter_add(term, topo.edge_targets(), n);
    theta_dot = tape.add(tape.add(tape.mul(nu, kTwoPi), zeta), xi);
  }

  const ad::Var inner =
      tape.sub(tape.mul(tape.mul(a, 0.25), tape.sub(rho, prev.r)), prev.r_dot);
  const ad::Var r_ddot = tape.add(tape.mul(a, inner), kappa);

  const double half = dt * 0.5;
  TapedCpgStep out;
  out.state.theta_dot = theta_dot;
  out.state.r_ddot = r_ddot;
  out.state.theta = tape.add(prev.theta, tape.mul(tape.add(prev.theta_dot, theta_dot), half));
  out.state.r_dot = tape.add(prev.r_dot, tape.mul(tape.add(prev.r_ddot, r_ddot), half));
  out.state.r = tape.add(prev.r, tape.mul(tape.add(prev.r_dot, out.state.r_dot), half));
  out.output = tape.mul(out.state.r, tape.cos(out.state.theta));
  return out;
}

}  // namespace cpg_actor
