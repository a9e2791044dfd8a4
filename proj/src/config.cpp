#include "cpg_actor/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace cpg_actor {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <class T>
std::string format_number(T x) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(x);
  } else {
    return std::to_string(x);
  }
}

template <class T>
std::vector<T> parse_list(std::string_view s) {
  std::vector<T> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) out.push_back(parse_number<T>(part));
  return out;
}

template <class T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += format_number(v[i]);
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T, class Ref>
Entry number(std::string key, Ref ref) {
  return {std::move(key), [ref](ExperimentConfig& c, std::string_view v) { ref(c) = parse_number<T>(v); },
          [ref](const ExperimentConfig& c) {
            return format_number(ref(const_cast<ExperimentConfig&>(c)));
          }};
}

template <class T, class Ref>
Entry list(std::string key, Ref ref) {
  return {std::move(key), [ref](ExperimentConfig& c, std::string_view v) { ref(c) = parse_list<T>(v); },
          [ref](const ExperimentConfig& c) {
            return format_list(ref(const_cast<ExperimentConfig&>(c)));
          }};
}

template <class Ref>
Entry vec2(std::string key, Ref ref) {
  return {std::move(key),
          [ref](ExperimentConfig& c, std::string_view v) {
            const auto xs = parse_list<double>(v);
            if (xs.size() != 2) throw ConfigError("expected two comma-separated values");
            ref(c) = {xs[0], xs[1]};
          },
          [ref](const ExperimentConfig& c) {
            const Vec2& x = ref(const_cast<ExperimentConfig&>(c));
            return format_double(x[0]) + "," + format_double(x[1]);
          }};
}

#define CFG(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"actor",
                 [](ExperimentConfig& c, std::string_view v) {
                   try {
                     c.actor = parse_actor_kind(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 },
                 [](const ExperimentConfig& c) { return std::string(actor_name(c.actor)); }});
    t.push_back(list<std::uint64_t>("seeds", CFG(c.seeds)));
    t.push_back(number<std::int64_t>("total_steps", CFG(c.total_steps)));
    t.push_back({"out", [](ExperimentConfig& c, std::string_view v) { c.out = std::string(v); },
                 [](const ExperimentConfig& c) { return c.out; }});

    t.push_back({"cpg.adjacency",
                 [](ExperimentConfig& c, std::string_view v) {
                   std::vector<std::vector<std::uint8_t>> adj;
                   for (auto row : split(v, ';')) {
                     std::vector<std::uint8_t> r;
                     for (char ch : row) {
                       if (ch != '0' && ch != '1') throw ConfigError("adjacency rows must be 0/1 digits");
                       r.push_back(static_cast<std::uint8_t>(ch - '0'));
                     }
                     adj.push_back(std::move(r));
                   }
                   c.actor_cfg.adjacency = std::move(adj);
                   c.actor_cfg.feedback.oscillators = c.actor_cfg.adjacency.size();
                 },
                 [](const ExperimentConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.actor_cfg.adjacency.size(); ++i) {
                     if (i > 0) s += ';';
                     for (auto x : c.actor_cfg.adjacency[i]) s += static_cast<char>('0' + x);
                   }
                   return s;
                 }});
    t.push_back(number<double>("cpg.dt", CFG(c.actor_cfg.dt)));
    t.push_back(number<double>("cpg.command", CFG(c.actor_cfg.cpg_init.command)));
    t.push_back(number<double>("cpg.command_max", CFG(c.command_max)));
    t.push_back({"cpg.init.mode",
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "default") {
                     c.actor_cfg.cpg_init.mode = CpgInitMode::kDefault;
                   } else if (v == "zero-coupling") {
                     c.actor_cfg.cpg_init.mode = CpgInitMode::kZeroCoupling;
                   } else {
                     throw ConfigError("expected 'default' or 'zero-coupling'");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.actor_cfg.cpg_init.mode == CpgInitMode::kDefault ? "default"
                                                                                        : "zero-coupling");
                 }});
    t.push_back(number<double>("cpg.init.frequency_hz", CFG(c.actor_cfg.cpg_init.frequency_hz)));
    t.push_back(number<double>("cpg.init.amplitude", CFG(c.actor_cfg.cpg_init.amplitude)));
    t.push_back(number<double>("cpg.init.convergence", CFG(c.actor_cfg.cpg_init.convergence)));
    t.push_back(number<double>("cpg.init.gain_std", CFG(c.actor_cfg.cpg_init.gain_std)));
    t.push_back(number<double>("cpg.init.coupling_std", CFG(c.actor_cfg.cpg_init.coupling_std)));

    t.push_back(list<std::size_t>("feedback.hidden", CFG(c.actor_cfg.feedback.hidden)));
    t.push_back(number<double>("feedback.xi_scale", CFG(c.actor_cfg.feedback.xi_scale)));
    t.push_back(number<double>("feedback.kappa_scale", CFG(c.actor_cfg.feedback.kappa_scale)));

    t.push_back(vec2("actor.joint_offset", CFG(c.actor_cfg.joints.offset)));
    t.push_back(vec2("actor.joint_range", CFG(c.actor_cfg.joints.range)));
    t.push_back(list<std::size_t>("actor.mlp_hidden", CFG(c.actor_cfg.mlp_hidden)));
    t.push_back(number<double>("actor.mlp_output_gain", CFG(c.actor_cfg.mlp_output_gain)));

    t.push_back(number<double>("warm_start.frequency_hz", CFG(c.actor_cfg.warm_start.target.frequency_hz)));
    t.push_back(number<double>("warm_start.amplitude", CFG(c.actor_cfg.warm_start.target.amplitude)));
    t.push_back(number<double>("warm_start.convergence", CFG(c.actor_cfg.warm_start.target.convergence)));
    t.push_back(number<double>("warm_start.weight", CFG(c.actor_cfg.warm_start.target.weight)));
    t.push_back(number<double>("warm_start.phase", CFG(c.actor_cfg.warm_start.target.phase)));
    t.push_back(number<int>("warm_start.epochs", CFG(c.actor_cfg.warm_start.epochs)));
    t.push_back(number<std::size_t>("warm_start.samples", CFG(c.actor_cfg.warm_start.samples)));
    t.push_back(number<std::size_t>("warm_start.minibatch", CFG(c.actor_cfg.warm_start.minibatch)));
    t.push_back(number<double>("warm_start.lr", CFG(c.actor_cfg.warm_start.lr)));
    t.push_back(number<double>("warm_start.holdout_fraction", CFG(c.actor_cfg.warm_start.holdout_fraction)));

    t.push_back(number<double>("hopper.body_mass", CFG(c.hopper.body_mass)));
    t.push_back(number<double>("hopper.thigh_mass", CFG(c.hopper.thigh_mass)));
    t.push_back(number<double>("hopper.shank_mass", CFG(c.hopper.shank_mass)));
    t.push_back(number<double>("hopper.thigh_length", CFG(c.hopper.thigh_length)));
    t.push_back(number<double>("hopper.shank_length", CFG(c.hopper.shank_length)));
    t.push_back(number<double>("hopper.gravity", CFG(c.hopper.gravity)));
    t.push_back(number<double>("hopper.contact_stiffness", CFG(c.hopper.contact_stiffness)));
    t.push_back(number<double>("hopper.contact_damping", CFG(c.hopper.contact_damping)));
    t.push_back(number<double>("hopper.friction", CFG(c.hopper.friction)));
    t.push_back(number<double>("hopper.slip_damping", CFG(c.hopper.slip_damping)));
    t.push_back(number<double>("hopper.kp", CFG(c.hopper.kp)));
    t.push_back(number<double>("hopper.kd", CFG(c.hopper.kd)));
    t.push_back(number<double>("hopper.torque_limit", CFG(c.hopper.torque_limit)));
    t.push_back(number<double>("hopper.joint_vel_limit", CFG(c.hopper.joint_vel_limit)));
    t.push_back(number<double>("hopper.dt_physics", CFG(c.hopper.dt_physics)));
    t.push_back(number<int>("hopper.substeps", CFG(c.hopper.substeps)));
    t.push_back(number<int>("hopper.horizon", CFG(c.hopper.horizon)));
    t.push_back(number<double>("hopper.min_height", CFG(c.hopper.min_height)));
    t.push_back(number<double>("hopper.max_height", CFG(c.hopper.max_height)));
    t.push_back(vec2("hopper.crouch", CFG(c.hopper.crouch)));
    t.push_back(number<double>("hopper.reset_noise", CFG(c.hopper.reset_noise)));

    t.push_back(number<double>("reward.c1", CFG(c.reward.c1)));
    t.push_back(number<double>("reward.c2", CFG(c.reward.c2)));
    t.push_back(number<double>("reward.c3", CFG(c.reward.c3)));
    t.push_back(number<double>("reward.c4", CFG(c.reward.c4)));
    t.push_back(number<double>("reward.c5", CFG(c.reward.c5)));

    t.push_back(number<double>("ppo.clip", CFG(c.ppo.clip)));
    t.push_back(number<double>("ppo.gamma", CFG(c.ppo.gamma)));
    t.push_back(number<double>("ppo.lam", CFG(c.ppo.lam)));
    t.push_back(number<double>("ppo.lr", CFG(c.ppo.lr)));
    t.push_back(number<std::size_t>("ppo.minibatch", CFG(c.ppo.minibatch)));
    t.push_back(number<int>("ppo.epochs", CFG(c.ppo.epochs)));
    t.push_back(number<std::size_t>("ppo.rollout", CFG(c.ppo.rollout)));
    t.push_back(number<std::size_t>("ppo.workers", CFG(c.ppo.workers)));
    t.push_back(number<double>("ppo.vf_coef", CFG(c.ppo.vf_coef)));
    t.push_back(number<double>("ppo.ent_coef", CFG(c.ppo.ent_coef)));
    t.push_back(number<double>("ppo.max_grad_norm", CFG(c.ppo.max_grad_norm)));
    t.push_back(number<double>("ppo.init_log_std", CFG(c.ppo.init_log_std)));
    t.push_back(list<std::size_t>("ppo.critic_hidden", CFG(c.ppo.critic_hidden)));
    t.push_back(number<double>("normalizer.clip", CFG(c.obs_clip)));

    t.push_back(number<int>("eval.episodes", CFG(c.eval.episodes)));
    t.push_back(list<std::int64_t>("eval.checkpoint_steps", CFG(c.eval.checkpoint_steps)));
    t.push_back(number<std::uint64_t>("eval.seed_offset", CFG(c.eval.seed_offset)));
    return t;
  }();
  return table;
}

#undef CFG

const Entry* find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (seeds.empty()) fail("seeds must list at least one seed");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (out.empty()) fail("out must not be empty");
  if (!(command_max > 0.0)) fail("cpg.command_max must be > 0");
  if (!(actor_cfg.cpg_init.command >= 0.0 && actor_cfg.cpg_init.command <= command_max)) {
    fail("cpg.command must be in [0, cpg.command_max]");
  }
  if (!(obs_clip > 0.0)) fail("normalizer.clip must be > 0");
  try {
    const CpgTopology topo = actor_cfg.topology();
    if (topo.size() != 2) fail("cpg.adjacency must be 2x2 for the hopper");
  } catch (const ContractViolation& e) {
    fail(std::string("cpg.adjacency: ") + e.what());
  }
  if (!(actor_cfg.dt > 0.0)) fail("cpg.dt must be > 0");
  const auto& ci = actor_cfg.cpg_init;
  if (!(ci.frequency_hz > 0.0)) fail("cpg.init.frequency_hz must be > 0");
  if (!(ci.amplitude > 0.0)) fail("cpg.init.amplitude must be > 0");
  if (!(ci.convergence > kConvergenceFloor)) fail("cpg.init.convergence must exceed 0.1");
  if (!(ci.gain_std >= 0.0)) fail("cpg.init.gain_std must be >= 0");
  if (!(ci.coupling_std >= 0.0)) fail("cpg.init.coupling_std must be >= 0");
  const auto& fb = actor_cfg.feedback;
  if (fb.hidden.empty()) fail("feedback.hidden must list at least one layer");
  for (auto h : fb.hidden) {
    if (h == 0) fail("feedback.hidden sizes must be > 0");
  }
  if (!(fb.xi_scale > 0.0)) fail("feedback.xi_scale must be > 0");
  if (!(fb.kappa_scale > 0.0)) fail("feedback.kappa_scale must be > 0");
  for (double r : actor_cfg.joints.range) {
    if (!(r > 0.0)) fail("actor.joint_range entries must be > 0");
  }
  for (auto h : actor_cfg.mlp_hidden) {
    if (h == 0) fail("actor.mlp_hidden sizes must be > 0");
  }
  if (!(actor_cfg.mlp_output_gain >= 0.0)) fail("actor.mlp_output_gain must be >= 0");
  const auto& ws = actor_cfg.warm_start;
  if (!(ws.target.frequency_hz > 0.0)) fail("warm_start.frequency_hz must be > 0");
  if (!(ws.target.amplitude > 0.0)) fail("warm_start.amplitude must be > 0");
  if (!(ws.target.convergence > kConvergenceFloor)) fail("warm_start.convergence must exceed 0.1");
  if (ws.epochs < 0) fail("warm_start.epochs must be >= 0");
  if (ws.samples < 2) fail("warm_start.samples must be >= 2");
  if (ws.minibatch == 0) fail("warm_start.minibatch must be > 0");
  if (!(ws.lr > 0.0)) fail("warm_start.lr must be > 0");
  if (!(ws.holdout_fraction >= 0.0 && ws.holdout_fraction < 1.0)) {
    fail("warm_start.holdout_fraction must be in [0, 1)");
  }
  hopper.validate();
  reward.validate();
  try {
    ppo.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (eval.episodes < 1) fail("eval.episodes must be >= 1");
  for (auto s : eval.checkpoint_steps) {
    if (s <= 0) fail("eval.checkpoint_steps entries must be > 0");
  }
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const Entry* e = find_entry(key);
  if (e == nullptr) throw ConfigError("unknown key '" + std::string(key) + "'");
  try {
    e->set(cfg, trim(value));
  } catch (const ConfigError& err) {
    throw ConfigError(std::string(key) + ": " + err.what());
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? text.size() - start : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

}  // namespace cpg_actor
