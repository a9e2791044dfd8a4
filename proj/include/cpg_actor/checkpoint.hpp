#pragma once

// Checkpoints are JSON documents. Every floating-point array is stored as a
// base-16 string of the IEEE-754 bit patterns (16 hex digits per value,
// big-endian digit order) so a load restores the exact bits.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cpg_actor/actors.hpp"
#include "cpg_actor/normalizer.hpp"
#include "cpg_actor/ppo.hpp"

namespace cpg_actor {

inline constexpr int kCheckpointSchemaVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex_encode(std::span<const double> values);
std::vector<double> hex_decode(std::string_view text);

struct Checkpoint {
  int schema_version = kCheckpointSchemaVersion;
  ActorKind actor = ActorKind::kCpgActor;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  std::int64_t updates = 0;
  std::string config;  // serialized ExperimentConfig
  std::map<std::string, std::vector<double>> arrays;

  bool operator==(const Checkpoint&) const = default;
};

// Splits the flat agent vector into named arrays (cpg_params and
// feedback_params for CPG actors, policy_params otherwise; log_std;
// critic_params) and adds the normalizer statistics.
Checkpoint make_checkpoint(const Agent& agent, std::span<const double> params,
                           const RunningNormalizer& normalizer, std::uint64_t seed,
                           std::int64_t steps, std::int64_t updates, std::string config);

// Reassembles the flat agent vector; throws CheckpointError when arrays are
// missing or have the wrong length for this agent.
std::vector<double> agent_params(const Agent& agent, const Checkpoint& ckpt);
RunningNormalizer checkpoint_normalizer(const Checkpoint& ckpt, double clip);

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cpg_actor
