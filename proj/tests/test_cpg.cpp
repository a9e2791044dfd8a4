#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "cpg_actor/cpg.hpp"
#include "cpg_actor/numeric.hpp"
#include "cpg_actor/stats.hpp"

using namespace cpg_actor;

namespace {

constexpr double kPi = std::numbers::pi;

const CpgTopology& hopper_topology() {
  static const CpgTopology topo = CpgTopology::fully_coupled(2);
  return topo;
}

CommandSignal unit_command() { return CommandSignal{{1.0}}; }

// v with exact nu = 0, rho = 1, a = 1 and the given uniform coupling.
std::vector<double> still_params(double weight, double phase) {
  const auto& topo = hopper_topology();
  const auto& L = topo.layout();
  std::vector<double> v(topo.param_count(), 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    v[L.freq_bias[i]] = -800.0;
    v[L.amp_bias[i]] = softplus_inverse(1.0);
    v[L.convergence[i]] = softplus_inverse(1.0 - kConvergenceFloor);
  }
  for (const auto& e : topo.edges()) {
    v[e.weight_index] = weight;
    v[e.phase_index] = phase;
  }
  return v;
}

CpgState state_of(std::vector<double> theta, std::vector<double> r) {
  CpgState s = CpgState::zeros(theta.size());
  s.theta = std::move(theta);
  s.r = std::move(r);
  return s;
}

}  // namespace

TEST_CASE("hopper topology has 14 parameters with unique indices") {
  const auto& topo = hopper_topology();
  CHECK(topo.size() == 2);
  CHECK(topo.param_count() == 14);
  CHECK(topo.edges().size() == 2);
  const auto& L = topo.layout();
  std::set<std::size_t> seen;
  for (const auto* group : {&L.freq_gain, &L.freq_bias, &L.amp_gain, &L.amp_bias, &L.convergence,
                            &L.coupling_weight, &L.coupling_phase}) {
    for (std::size_t k : *group) {
      CHECK(k < topo.param_count());
      CHECK(seen.insert(k).second);
    }
  }
  CHECK(seen.size() == topo.param_count());
}

TEST_CASE("topology rejects self coupling and ragged adjacency") {
  CHECK_THROWS_AS(CpgTopology({{1, 1}, {1, 0}}), ContractViolation);
  CHECK_THROWS_AS(CpgTopology({{0, 1}, {1}}), ContractViolation);
  CHECK_THROWS_AS(CpgTopology({}), ContractViolation);
  const CpgTopology single(std::vector<std::vector<std::uint8_t>>{{0}});
  CHECK(single.param_count() == 5);
}

TEST_CASE("uncoupled fixed point") {
  const auto& topo = hopper_topology();
  const auto v = make_cpg_params(topo, 1.0, 0.4, 10.0, 0.0, 0.0);
  const auto rho = intrinsic_amplitude(topo, v, unit_command());
  const CpgState s = state_of({0.3, 1.1}, rho);
  const auto d = cpg_derivatives(topo, s, v, unit_command(), FeedbackSignals::zeros(2));
  CHECK(d.theta_dot[0] == doctest::Approx(2.0 * kPi).epsilon(1e-14));
  CHECK(d.theta_dot[1] == doctest::Approx(2.0 * kPi).epsilon(1e-14));
  CHECK(d.r_ddot[0] == 0.0);
  CHECK(d.r_ddot[1] == 0.0);
}

TEST_CASE("coupling vanishes for equal phases and zero phase bias") {
  const auto& topo = hopper_topology();
  const auto v = still_params(0.7, 0.0);
  const auto d = cpg_derivatives(topo, state_of({0.9, 0.9}, {1.0, 2.0}), v, unit_command(),
                                 FeedbackSignals::zeros(2));
  CHECK(d.zeta[0] == 0.0);
  CHECK(d.zeta[1] == 0.0);
  const auto v0 = still_params(0.0, 1.3);
  const auto d0 = cpg_derivatives(topo, state_of({0.2, 2.9}, {1.0, 2.0}), v0, unit_command(),
                                  FeedbackSignals::zeros(2));
  CHECK(d0.zeta[0] == 0.0);
  CHECK(d0.zeta[1] == 0.0);
}

TEST_CASE("quarter-period phase offset hand evaluation") {
  const auto& topo = hopper_topology();
  const auto v = still_params(0.5, 0.0);
  const auto d = cpg_derivatives(topo, state_of({0.0, kPi / 2.0}, {1.0, 1.0}), v, unit_command(),
                                 FeedbackSignals::zeros(2));
  CHECK(d.theta_dot[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d.theta_dot[1] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(d.r_ddot[0] == 0.0);
  CHECK(d.r_ddot[1] == 0.0);
}

TEST_CASE("feedback enters additively") {
  const auto& topo = hopper_topology();
  const auto v = make_cpg_params(topo, 1.5, 0.4, 10.0, 0.5, kPi);
  const CpgState s = state_of({0.1, 2.0}, {0.3, 0.5});
  const auto base = cpg_derivatives(topo, s, v, unit_command(), FeedbackSignals::zeros(2));
  const auto fb = cpg_derivatives(topo, s, v, unit_command(), FeedbackSignals{{0.25, -1.0}, {3.0, 0.5}});
  CHECK(fb.theta_dot[0] - base.theta_dot[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(fb.theta_dot[1] - base.theta_dot[1] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(fb.r_ddot[0] - base.r_ddot[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fb.r_ddot[1] - base.r_ddot[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("trapezoidal integration") {
  SUBCASE("constant phase rate is exact") {
    CpgState s = state_of({0.3, -1.0}, {0.0, 0.0});
    s.theta_dot = {kTwoPi, kTwoPi};
    CpgDerivatives next{{kTwoPi, kTwoPi}, {0.0, 0.0}, {0.0, 0.0}};
    const CpgState out = cpg_integrate(s, next, 0.01);
    CHECK(out.theta[0] == 0.3 + 0.02 * kPi);
    CHECK(out.theta[1] == -1.0 + 0.02 * kPi);
  }
  SUBCASE("zero derivatives leave the state unchanged") {
    const CpgState s = state_of({0.3, -1.0}, {0.7, 0.2});
    const CpgState out = cpg_integrate(s, CpgDerivatives{{0, 0}, {0, 0}, {0, 0}}, 0.01);
    CHECK(out == s);
  }
  SUBCASE("amplitude acceleration ramp") {
    const CpgState s = state_of({0.0, 0.0}, {0.0, 0.0});
    const CpgState out = cpg_integrate(s, CpgDerivatives{{0, 0}, {2.0, 2.0}, {0, 0}}, 0.1);
    CHECK(out.r_dot[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(out.r[0] == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(out.r_ddot[0] == 2.0);
  }
  SUBCASE("non-positive dt is a contract violation") {
    const CpgState s = state_of({0.0, 0.0}, {0.0, 0.0});
    CHECK_THROWS_AS(cpg_integrate(s, CpgDerivatives{{0, 0}, {0, 0}, {0, 0}}, 0.0), ContractViolation);
  }
}

TEST_CASE("output is r cos theta") {
  CHECK(cpg_output(state_of({0.0}, {1.0}))[0] == 1.0);
  CHECK(cpg_output(state_of({1.234}, {0.0}))[0] == 0.0);
  CHECK(cpg_output(state_of({kPi / 3.0}, {2.0}))[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("step is the composition of derivatives, integration and output") {
  const auto& topo = hopper_topology();
  const auto v = make_cpg_params(topo, 1.5, 0.4, 10.0, 0.5, kPi);
  CpgState s = state_of({0.4, 1.9}, {0.35, 0.2});
  s.theta_dot = {9.0, 9.5};
  s.r_dot = {0.1, -0.2};
  s.r_ddot = {1.0, -3.0};
  const FeedbackSignals fb{{0.3, -0.1}, {2.0, 1.0}};
  const auto step = cpg_step(topo, s, v, unit_command(), fb, 0.01);
  const auto d = cpg_derivatives(topo, s, v, unit_command(), fb);
  const auto next = cpg_integrate(s, d, 0.01);
  CHECK(step.state == next);
  CHECK(step.output == cpg_output(next));
}

TEST_CASE("dimension mismatches are contract violations") {
  const auto& topo = hopper_topology();
  const auto v = make_cpg_params(topo, 1.5, 0.4, 10.0, 0.5, kPi);
  const CpgState s = state_of({0.0, 0.0}, {0.4, 0.4});
  CHECK_THROWS_AS(cpg_derivatives(topo, s, v, unit_command(), FeedbackSignals::zeros(3)), ContractViolation);
  CHECK_THROWS_AS(cpg_derivatives(topo, state_of({0.0}, {0.4}), v, unit_command(), FeedbackSignals::zeros(2)),
                  ContractViolation);
  std::vector<double> short_v(v.begin(), v.end() - 1);
  CHECK_THROWS_AS(cpg_derivatives(topo, s, short_v, unit_command(), FeedbackSignals::zeros(2)), ContractViolation);
  CHECK_THROWS_AS(CpgState::unpack(std::vector<double>(7, 0.0)), ContractViolation);
}

TEST_CASE("mapped constants stay positive for extreme raw parameters") {
  const auto& topo = hopper_topology();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(topo.param_count());
    for (auto& x : v) x = u(rng);
    for (double d : {0.0, 1.0, 2.0}) {
      for (double nu : intrinsic_frequency(topo, v, CommandSignal{{d}})) CHECK(nu >= 0.0);
      for (double rho : intrinsic_amplitude(topo, v, CommandSignal{{d}})) CHECK(rho >= 0.0);
    }
    for (double a : convergence_rate(topo, v)) CHECK(a > 0.0);
  }
}

TEST_CASE("open-loop rollout settles on the intrinsic frequency and amplitude") {
  const auto& topo = hopper_topology();
  const auto v = make_cpg_params(topo, 1.5, 0.4, 10.0, 0.5, kPi);
  CpgState s = state_of({0.0, 0.5}, {0.1, 0.7});
  const double dt = 0.01;
  std::vector<double> x;
  double r_max = 0.0;
  for (int k = 0; k < 3000; ++k) {
    const auto step = cpg_step(topo, s, v, unit_command(), FeedbackSignals::zeros(2), dt);
    s = step.state;
    if (k >= 1000) {
      x.push_back(step.output[0]);
      r_max = std::max(r_max, std::abs(step.output[0]));
    }
  }
  CHECK(s.r[0] == doctest::Approx(0.4).epsilon(1e-3));
  CHECK(s.r[1] == doctest::Approx(0.4).epsilon(1e-3));
  CHECK(r_max == doctest::Approx(0.4).epsilon(1e-3));
  CHECK(dominant_frequency(x, dt) == doctest::Approx(1.5).epsilon(1e-3));
  // Anti-phase coupling locks the pair half a period apart.
  const double diff = std::remainder(s.theta[1] - s.theta[0], 2.0 * kPi);
  CHECK(std::abs(std::abs(diff) - kPi) < 1e-3);
}

TEST_CASE("amplitude stays bounded over a long open-loop rollout") {
  const auto& topo = hopper_topology();
  std::mt19937_64 rng(9);
  const CpgInit init = init_cpg(topo, 17, CpgInitConfig{});
  CpgState s = init.state;
  const double rho = std::ranges::max(intrinsic_amplitude(topo, init.params.v, unit_command()));
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    s = cpg_step(topo, s, init.params.v, unit_command(), FeedbackSignals::zeros(2), 0.01).state;
    worst = std::max({worst, std::abs(s.r[0]), std::abs(s.r[1])});
  }
  CHECK(s.finite());
  CHECK(worst <= 10.0 * rho);
}

TEST_CASE("externally threaded steps equal the internal unroll bitwise") {
  const auto& topo = hopper_topology();
  const CpgInit init = init_cpg(topo, 3, CpgInitConfig{});
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<FeedbackSignals> fbs(1000);
  for (auto& f : fbs) f = FeedbackSignals{{n(rng), n(rng)}, {5.0 * n(rng), 5.0 * n(rng)}};
  const auto unrolled = cpg_unroll(topo, init.state, init.params.v, unit_command(), fbs, 0.01);
  CpgState s = init.state;
  for (std::size_t k = 0; k < fbs.size(); ++k) {
    // Round trip through the packed form the actors carry.
    const auto packed = s.pack();
    const auto step = cpg_step(topo, CpgState::unpack(packed), init.params.v, unit_command(), fbs[k], 0.01);
    REQUIRE(step.state == unrolled[k].state);
    REQUIRE(step.output == unrolled[k].output);
    s = step.state;
  }
}

TEST_CASE("batched evaluation equals per-stream steps") {
  const auto& topo = hopper_topology();
  const CpgInit init = init_cpg(topo, 8, CpgInitConfig{});
  std::mt19937_64 rng(10);
  std::vector<CpgState> states;
  std::vector<CommandSignal> cmds;
  std::vector<FeedbackSignals> fbs;
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int b = 0; b < 6; ++b) {
    states.push_back(reset_cpg_state(topo, init.params.v, unit_command(), rng));
    states.back().theta_dot = {u(rng), u(rng)};
    cmds.push_back(CommandSignal{{u(rng)}});
    fbs.push_back(FeedbackSignals{{u(rng), -u(rng)}, {u(rng), u(rng)}});
  }
  const auto batch = batch_cpg_step(topo, states, init.params.v, cmds, fbs, 0.01);
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto single = cpg_step(topo, states[b], init.params.v, cmds[b], fbs[b], 0.01);
    CHECK(batch.states[b] == single.state);
    CHECK(batch.outputs[b] == single.output);
  }
}

TEST_CASE("taped step reproduces the direct step bitwise and matches finite differences") {
  const auto& topo = hopper_topology();
  const CpgInit init = init_cpg(topo, 21, CpgInitConfig{});
  CpgState s = init.state;
  s.theta_dot = {8.0, 10.0};
  s.r_dot = {0.2, -0.1};
  s.r_ddot = {-2.0, 4.0};
  const FeedbackSignals fb{{0.4, -0.3}, {1.5, -2.5}};
  const auto direct = cpg_step(topo, s, init.params.v, unit_command(), fb, 0.01);

  ad::Tape tape;
  const ad::Var v = tape.constant(init.params.v);
  const auto taped = record_cpg_step(tape, topo, v, tape_cpg_state(tape, s, false), unit_command(),
                                     tape.constant(fb.xi), tape.constant(fb.kappa), 0.01);
  const auto out = tape.value(taped.output);
  CHECK(std::vector<double>(out.begin(), out.end()) == direct.output);
  const auto th = tape.value(taped.state.theta);
  CHECK(std::vector<double>(th.begin(), th.end()) == direct.state.theta);
  const auto r = tape.value(taped.state.r);
  CHECK(std::vector<double>(r.begin(), r.end()) == direct.state.r);

  const ad::TapedFn fn = [&](ad::Tape& t, ad::ParamRef p) {
    const ad::Var vv = t.param(p.slice(0, 14));
    const ad::Var xi = t.param(p.slice(14, 2));
    const ad::Var kappa = t.param(p.slice(16, 2));
    const auto st = record_cpg_step(t, topo, vv, tape_cpg_state(t, s, false), unit_command(), xi, kappa, 0.01);
    return t.add(t.sum(t.mul(st.output, t.constant({1.0, -0.7}))),
                 t.sum(t.mul(st.state.theta_dot, t.constant({0.3, 0.2}))));
  };
  std::vector<double> point = init.params.v;
  point.insert(point.end(), {0.4, -0.3, 1.5, -2.5});
  CHECK(ad::finite_diff_check(fn, point, 1e-6, 1e-5, nullptr, 1e-4).passed());
}

TEST_CASE("warm-start parameter helper uses signed phases per edge direction") {
  const auto& topo = hopper_topology();
  const auto v = make_cpg_params(topo, 1.5, 0.4, 10.0, 0.5, kPi);
  for (const auto& e : topo.edges()) {
    CHECK(v[e.weight_index] == 0.5);
    CHECK(v[e.phase_index] == (e.target < e.source ? kPi : -kPi));
  }
  CHECK(convergence_rate(topo, v)[0] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(intrinsic_frequency(topo, v, unit_command())[1] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("initialization is seeded and zero-coupling mode zeroes the weights") {
  const auto& topo = hopper_topology();
  const CpgInit a = init_cpg(topo, 5, CpgInitConfig{});
  const CpgInit b = init_cpg(topo, 5, CpgInitConfig{});
  CHECK(a.params.v == b.params.v);
  CHECK(a.state == b.state);
  CpgInitConfig zc;
  zc.mode = CpgInitMode::kZeroCoupling;
  const CpgInit z = init_cpg(topo, 5, zc);
  for (const auto& e : topo.edges()) CHECK(z.params.v[e.weight_index] == 0.0);
  const auto nu = intrinsic_frequency(topo, a.params.v, unit_command());
  CHECK(nu[0] == doctest::Approx(1.5).epsilon(1e-12));
}
