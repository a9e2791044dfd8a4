#include "cpg_actor/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cpg_actor {

namespace {

constexpr char kDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::vector<std::pair<std::string, std::size_t>> segments(const Agent& agent) {
  std::vector<std::pair<std::string, std::size_t>> seg;
  if (const auto* cpg = dynamic_cast<const CpgActor*>(&agent.actor())) {
    seg.emplace_back("cpg_params", cpg->topology().param_count());
    if (cpg->closed_loop()) seg.emplace_back("feedback_params", cpg->feedback().param_count());
  } else {
    seg.emplace_back("policy_params", agent.actor().param_count());
  }
  seg.emplace_back("log_std", agent.action_dim());
  seg.emplace_back("critic_params", agent.critic().param_count());
  return seg;
}

}  // namespace

std::string hex_encode(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 16);
  for (double x : values) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int shift = 60; shift >= 0; shift -= 4) out += kDigits[(bits >> shift) & 0xF];
  }
  return out;
}

std::vector<double> hex_decode(std::string_view text) {
  if (text.size() % 16 != 0) throw CheckpointError("hex array length is not a multiple of 16");
  std::vector<double> out(text.size() / 16);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t bits = 0;
    for (std::size_t d = 0; d < 16; ++d) {
      const int v = hex_value(text[k * 16 + d]);
      if (v < 0) throw CheckpointError("invalid hex digit in array");
      bits = (bits << 4) | static_cast<std::uint64_t>(v);
    }
    out[k] = std::bit_cast<double>(bits);
  }
  return out;
}

Checkpoint make_checkpoint(const Agent& agent, std::span<const double> params,
                           const RunningNormalizer& normalizer, std::uint64_t seed,
                           std::int64_t steps, std::int64_t updates, std::string config) {
  if (params.size() != agent.param_count()) {
    throw CheckpointError("parameter vector does not match the agent layout");
  }
  Checkpoint c;
  c.actor = agent.actor().kind();
  c.seed = seed;
  c.steps = steps;
  c.updates = updates;
  c.config = std::move(config);
  std::size_t off = 0;
  for (const auto& [name, len] : segments(agent)) {
    c.arrays[name].assign(params.begin() + static_cast<std::ptrdiff_t>(off),
                          params.begin() + static_cast<std::ptrdiff_t>(off + len));
    off += len;
  }
  c.arrays["obs_mean"] = normalizer.mean();
  c.arrays["obs_var"] = normalizer.var();
  c.arrays["obs_count"] = {normalizer.count()};
  return c;
}

std::vector<double> agent_params(const Agent& agent, const Checkpoint& ckpt) {
  if (ckpt.actor != agent.actor().kind()) throw CheckpointError("checkpoint actor kind differs from the agent");
  std::vector<double> p;
  p.reserve(agent.param_count());
  for (const auto& [name, len] : segments(agent)) {
    const auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end()) throw CheckpointError("checkpoint is missing array '" + name + "'");
    if (it->second.size() != len) {
      throw CheckpointError("checkpoint array '" + name + "' has " + std::to_string(it->second.size()) +
                            " entries, expected " + std::to_string(len));
    }
    p.insert(p.end(), it->second.begin(), it->second.end());
  }
  return p;
}

RunningNormalizer checkpoint_normalizer(const Checkpoint& ckpt, double clip) {
  const auto mean = ckpt.arrays.find("obs_mean");
  const auto var = ckpt.arrays.find("obs_var");
  const auto count = ckpt.arrays.find("obs_count");
  if (mean == ckpt.arrays.end() || var == ckpt.arrays.end() || count == ckpt.arrays.end() ||
      count->second.size() != 1 || mean->second.size() != var->second.size()) {
    throw CheckpointError("checkpoint normalizer statistics are missing or malformed");
  }
  RunningNormalizer n(mean->second.size(), clip);
  n.restore(mean->second, var->second, count->second[0]);
  return n;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::ordered_json j;
  j["schema_version"] = ckpt.schema_version;
  j["actor"] = std::string(actor_name(ckpt.actor));
  j["seed"] = ckpt.seed;
  j["steps"] = ckpt.steps;
  j["updates"] = ckpt.updates;
  j["config"] = ckpt.config;
  auto& arrays = j["arrays"];
  arrays = nlohmann::ordered_json::object();
  for (const auto& [name, values] : ckpt.arrays) arrays[name] = hex_encode(values);
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    Checkpoint c;
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kCheckpointSchemaVersion) {
      throw CheckpointError("checkpoint schema_version " + std::to_string(c.schema_version) +
                            " is not supported (this build reads version " +
                            std::to_string(kCheckpointSchemaVersion) + ")");
    }
    c.actor = parse_actor_kind(j.at("actor").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.steps = j.at("steps").get<std::int64_t>();
    c.updates = j.at("updates").get<std::int64_t>();
    c.config = j.at("config").get<std::string>();
    for (const auto& [name, value] : j.at("arrays").items()) {
      c.arrays[name] = hex_decode(value.get<std::string>());
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt);
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace cpg_actor
