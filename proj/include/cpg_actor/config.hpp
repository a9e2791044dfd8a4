#pragma once

// Experiment configuration: line-oriented `key = value` text with dotted
// section paths. Lists are comma separated; adjacency rows are separated by
// ';' (e.g. "01;10"). '#' starts a comment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cpg_actor/actors.hpp"
#include "cpg_actor/hopper.hpp"
#include "cpg_actor/ppo.hpp"

namespace cpg_actor {

struct EvalConfig {
  int episodes = 10;
  // Extra checkpoints are written at the first update reaching each of these.
  std::vector<std::int64_t> checkpoint_steps = {100000};
  std::uint64_t seed_offset = 1000000;  // evaluation episode seeds start here

  bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
  ActorKind actor = ActorKind::kCpgActor;
  std::vector<std::uint64_t> seeds = {0};
  std::int64_t total_steps = 2000000;
  std::string out = "runs";
  double command_max = 2.0;
  double obs_clip = 10.0;

  ActorConfig actor_cfg;
  HopperConfig hopper;
  RewardConfig reward;
  PpoConfig ppo;
  EvalConfig eval;

  // Throws ConfigError naming the offending key and constraint.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

// Parses and validates. Unknown keys and malformed values raise ConfigError
// with the line number.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key, one per line, with doubles at round-trip precision.
std::string serialize_config(const ExperimentConfig& cfg);

// Sets one key without validating the whole config.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

std::vector<std::string> config_keys();

}  // namespace cpg_actor
