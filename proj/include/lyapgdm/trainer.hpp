#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lyapgdm/agent.hpp"
#include "lyapgdm/env.hpp"

namespace lyapgdm::rl {

// Networks are trained in single precision.
using Real = float;

struct TrainerConfig {
  double gamma = 0.99;
  double tau = 0.005;
  int batch = 256;
  int warmup = 1000;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int episodes = 1000;
  int updates_per_step = 1;
  std::uint64_t seed = 0;
  int buffer_capacity = 100000;
  double grad_clip = 1.0;
  double explore_sigma_start = 0.2;  // additive Gaussian on raw actions, decays linearly
  double explore_sigma_end = 0.01;
  bool explore = true;

  void validate() const;  // throws ConfigError naming the key
  bool operator==(const TrainerConfig&) const = default;
};

// Diffusion actor settings; ignored by the MLP agent.
struct DiffusionConfig {
  int steps = 5;
  double beta_min = 0.1;
  double beta_max = 10.0;
  int embed_dim = 16;
  double x0_clip = 1.0;  // 0 disables clipping of the x0 prediction
  bool train_chain_noise = true;
  bool eval_chain_noise = true;

  void validate() const;
  bool operator==(const DiffusionConfig&) const = default;
};

struct NetworkConfig {
  std::vector<int> denoiser_hidden{128, 128, 128};
  std::vector<int> critic_hidden{256, 256};
  std::vector<int> mlp_actor_hidden{256, 256};

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

AgentSpec make_agent_spec(AgentKind kind, const env::EnvConfig& env, const TrainerConfig& trainer,
                          const DiffusionConfig& diffusion, const NetworkConfig& nets);

struct EpisodeMetrics {
  int episode = 0;
  double reward_mean = 0.0;
  double dpp_mean = 0.0;
  double rate_mean_mbps = 0.0;
  double energy_mean_j = 0.0;
  double queue_final = 0.0;
  double actor_loss = 0.0;   // mean over the episode's updates, 0 when none ran
  double critic_loss = 0.0;
  int steps = 0;             // env steps in the episode
  int updates = 0;
  double wall_ms = 0.0;
};

struct TrainResult {
  AgentNets<Real> nets;
  std::vector<EpisodeMetrics> metrics;
  std::uint64_t total_updates = 0;
};

using EpisodeCallback = std::function<void(const EpisodeMetrics&, const AgentNets<Real>&)>;

// Exploration sigma for a 0-based episode index (linear decay start -> end).
double exploration_sigma(const TrainerConfig& cfg, int episode);

// The full actor-critic loop. While the buffer holds fewer than `warmup`
// transitions, actions are i.i.d. standard-normal raw vectors; afterwards they
// come from the current actor plus exploration noise. Deterministic per seed.
TrainResult train_run(const env::EnvConfig& env_cfg, const TrainerConfig& cfg,
                      const DiffusionConfig& diffusion, const NetworkConfig& networks,
                      AgentKind kind, const EpisodeCallback& on_episode = {});

}  // namespace lyapgdm::rl
