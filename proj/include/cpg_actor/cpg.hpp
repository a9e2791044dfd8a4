#pragma once

// Discrete-time network of coupled Hopf oscillators.
//
// Per oscillator i, with the previous state (superscript t-1) carried by the
// caller:
//
//   theta_dot_i = 2 pi nu_i(d) + zeta_i + xi_i
//   zeta_i      = sum_j A_ij r_j w_ij sin(theta_j - theta_i - phi_ij)
//   r_ddot_i    = a_i (a_i / 4 (rho_i(d) - r_i) - r_dot_i) + kappa_i
//   x_i         = r_i cos(theta_i)
//
// and phases/amplitudes advance with the trapezoidal rule. The step is a pure
// function of (state, params, command, feedback), which is what lets the
// actor treat the recurrent state as an ordinary input.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "cpg_actor/autodiff.hpp"

namespace cpg_actor {

class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CouplingEdge {
  std::size_t target;  // i: oscillator receiving the coupling
  std::size_t source;  // j
  std::size_t weight_index;
  std::size_t phase_index;
};

// Index map from parameter roles into the flat vector v.
struct ParamLayout {
  std::vector<std::size_t> freq_gain;
  std::vector<std::size_t> freq_bias;
  std::vector<std::size_t> amp_gain;
  std::vector<std::size_t> amp_bias;
  std::vector<std::size_t> convergence;
  std::vector<std::size_t> coupling_weight;  // one per edge
  std::vector<std::size_t> coupling_phase;   // one per edge
};

class CpgTopology {
 public:
  // adjacency[i][j] != 0 when oscillator j couples into i.
  explicit CpgTopology(std::vector<std::vector<std::uint8_t>> adjacency);

  // Every ordered pair (i, j), i != j, coupled. For N = 2 this is the hopper
  // hip/knee network.
  static CpgTopology fully_coupled(std::size_t n);

  std::size_t size() const { return n_; }
  std::size_t param_count() const { return m_; }
  bool coupled(std::size_t target, std::size_t source) const {
    return adjacency_[target * n_ + source] != 0;
  }
  std::span<const CouplingEdge> edges() const { return edges_; }
  const ParamLayout& layout() const { return layout_; }

  // Gather lists used by the batched and taped evaluations.
  std::span<const std::size_t> edge_targets() const { return edge_targets_; }
  std::span<const std::size_t> edge_sources() const { return edge_sources_; }

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<std::uint8_t> adjacency_;
  std::vector<CouplingEdge> edges_;
  std::vector<std::size_t> edge_targets_;
  std::vector<std::size_t> edge_sources_;
  ParamLayout layout_;
};

struct CpgState {
  std::vector<double> theta;
  std::vector<double> theta_dot;
  std::vector<double> r;
  std::vector<double> r_dot;
  std::vector<double> r_ddot;

  static CpgState zeros(std::size_t n);
  std::size_t size() const { return theta.size(); }
  bool finite() const;

  // theta | theta_dot | r | r_dot | r_ddot, 5N entries.
  std::vector<double> pack() const;
  void pack_into(std::span<double> out) const;
  static CpgState unpack(std::span<const double> flat);

  bool operator==(const CpgState&) const = default;
};

struct CpgParams {
  std::vector<double> v;
};

// Drive d. A single entry is shared by every oscillator; otherwise one entry
// per oscillator.
struct CommandSignal {
  std::vector<double> d;
};

struct FeedbackSignals {
  std::vector<double> xi;     // rad/s, on phase dynamics
  std::vector<double> kappa;  // 1/s^2, on amplitude dynamics

  static FeedbackSignals zeros(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  }
};

struct CpgDerivatives {
  std::vector<double> theta_dot;
  std::vector<double> r_ddot;
  std::vector<double> zeta;
};

// Lower bound added to softplus(a_raw).
inline constexpr double kConvergenceFloor = 0.1;

// Mapped oscillator constants for one command.
std::vector<double> intrinsic_frequency(const CpgTopology& topo, std::span<const double> v,
                                        const CommandSignal& cmd);
std::vector<double> intrinsic_amplitude(const CpgTopology& topo, std::span<const double> v,
                                        const CommandSignal& cmd);
std::vector<double> convergence_rate(const CpgTopology& topo, std::span<const double> v);

CpgDerivatives cpg_derivatives(const CpgTopology& topo, const CpgState& state,
                               std::span<const double> v, const CommandSignal& cmd,
                               const FeedbackSignals& fb);

// Trapezoidal update. The previous derivatives are the ones stored in
// `state`; the returned state stores `next`.
CpgState cpg_integrate(const CpgState& state, const CpgDerivatives& next, double dt);

std::vector<double> cpg_output(const CpgState& state);

struct CpgStepResult {
  CpgState state;
  std::vector<double> output;
  CpgDerivatives derivatives;
};

CpgStepResult cpg_step(const CpgTopology& topo, const CpgState& state,
                       std::span<const double> v, const CommandSignal& cmd,
                       const FeedbackSignals& fb, double dt);

// Runs `steps` consecutive steps internally; fbs holds one entry per step.
std::vector<CpgStepResult> cpg_unroll(const CpgTopology& topo, const CpgState& initial,
                                      std::span<const double> v, const CommandSignal& cmd,
                                      std::span<const FeedbackSignals> fbs, double dt);

struct BatchStepResult {
  std::vector<CpgState> states;
  std::vector<std::vector<double>> outputs;
};

// Structure-of-arrays evaluation of B independent streams sharing one
// parameter vector.
BatchStepResult batch_cpg_step(const CpgTopology& topo, std::span<const CpgState> states,
                               std::span<const double> v,
                               std::span<const CommandSignal> cmds,
                               std::span<const FeedbackSignals> fbs, double dt);

enum class CpgInitMode { kDefault, kZeroCoupling };

struct CpgInitConfig {
  CpgInitMode mode = CpgInitMode::kDefault;
  double frequency_hz = 1.5;     // nu(d0) target
  double amplitude = 0.4;        // rho(d0) target
  double convergence = 10.0;     // a target
  double gain_std = 0.1;         // std of the command gains
  double coupling_std = 0.1;     // std of w_raw
  double command = 1.0;          // d0

  bool operator==(const CpgInitConfig&) const = default;
};

struct CpgInit {
  CpgParams params;
  CpgState state;
};

CpgInit init_cpg(const CpgTopology& topo, std::uint64_t seed, const CpgInitConfig& cfg);

// Fresh episode state: theta ~ U[0, 2pi), r = rho(d), everything else zero.
CpgState reset_cpg_state(const CpgTopology& topo, std::span<const double> v,
                         const CommandSignal& cmd, std::mt19937_64& rng);

// Parameter vector realising the given frequency/amplitude/convergence with
// zero command gains and uniform coupling (w, phase) on every edge; the
// phase on edge (i, j) is +phase for i < j and -phase otherwise.
std::vector<double> make_cpg_params(const CpgTopology& topo, double frequency_hz,
                                    double amplitude, double convergence, double weight,
                                    double phase);

// Taped counterpart of cpg_step. All vars have N entries.
struct TapedCpgState {
  ad::Var theta, theta_dot, r, r_dot, r_ddot;
};

struct TapedCpgStep {
  TapedCpgState state;
  ad::Var output;
};

TapedCpgState tape_cpg_state(ad::Tape& tape, const CpgState& state, bool differentiable);

TapedCpgStep record_cpg_step(ad::Tape& tape, const CpgTopology& topo, ad::Var v,
                             const TapedCpgState& prev, const CommandSignal& cmd,
                             ad::Var xi, ad::Var kappa, double dt);

}  // namespace cpg_actor
