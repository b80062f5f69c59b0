#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lyapgdm/env.hpp"
#include "lyapgdm/trainer.hpp"

namespace lyapgdm::config {

enum class PolicyKind { gdm_ddpg, mlp_ddpg, myopic, static_path, random };

std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(std::string_view s);  // ConfigError on unknown names
bool is_learned(PolicyKind k);

enum class SweepMode { eval, train };

struct ExperimentConfig {
  PolicyKind agent = PolicyKind::gdm_ddpg;
  std::string out = "runs/default";
  int eval_episodes = 20;
  std::uint64_t eval_seed = 0;
  std::string checkpoint;  // directory holding manifest.json; empty means <out>/checkpoints/final
  int checkpoint_every = 100;
  std::string sweep_param;
  std::vector<double> sweep_values;
  SweepMode sweep_mode = SweepMode::eval;

  bool operator==(const ExperimentConfig&) const = default;
};

struct RunConfig {
  env::EnvConfig env;
  rl::TrainerConfig trainer;
  rl::DiffusionConfig diffusion;
  rl::NetworkConfig networks;
  ExperimentConfig experiment;

  // Checks every section; throws ConfigError naming the key.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Every accepted dotted key, in serialisation order.
const std::vector<std::string>& known_keys();

// Sets one dotted key from its text form. ConfigError on unknown key or bad value.
void set_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_value(const RunConfig& cfg, std::string_view key);

// Parses `key = value` lines grouped under [section] headers. Keys may also be
// written fully dotted outside any section. '#' and ';' start comments.
// Missing keys keep their defaults. The result is not validated.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config_file(const std::string& path);

// Sectioned text that parse_config_text maps back to an equal config.
std::string serialize_config(const RunConfig& cfg);

struct Override {
  std::string key;
  std::string value;
};

// Builds the effective config: defaults, then the file (if any), then the
// overrides in order, then the explicit seed. When neither the file nor an
// override sets trainer.seed and no explicit seed is given, `env_seed`
// (normally $LYAPGDM_SEED) is used. The result is validated.
RunConfig resolve(const std::optional<std::string>& path, const std::vector<Override>& overrides,
                  std::optional<std::uint64_t> explicit_seed, const char* env_seed);

// Shortest text that reads back to the same double; locale independent.
std::string format_double(double v);
double parse_double(std::string_view s, std::string_view key);

}  // namespace lyapgdm::config
