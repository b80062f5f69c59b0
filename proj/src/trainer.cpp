#include "lyapgdm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "lyapgdm/errors.hpp"
#include "lyapgdm/replay_buffer.hpp"

namespace lyapgdm::rl {

namespace {

void require(bool ok, const char* key, const char* what) {
  if (!ok) throw ConfigError(std::string(key) + ": " + what);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

nn::Mat<Real> column(const env::Observation& obs) {
  nn::Mat<Real> m(static_cast<Eigen::Index>(obs.size()), 1);
  for (std::size_t i = 0; i < obs.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<Real>(obs[i]);
  return m;
}

}  // namespace

void TrainerConfig::validate() const {
  require(gamma >= 0.0 && gamma <= 1.0, "trainer.gamma", "must lie in [0, 1]");
  require(tau > 0.0 && tau <= 1.0, "trainer.tau", "must lie in (0, 1]");
  require(batch >= 1, "trainer.batch", "must be >= 1");
  require(warmup >= 0, "trainer.warmup", "must be >= 0");
  require(actor_lr >= 0.0 && std::isfinite(actor_lr), "trainer.actor_lr", "must be >= 0");
  require(critic_lr >= 0.0 && std::isfinite(critic_lr), "trainer.critic_lr", "must be >= 0");
  require(episodes >= 1, "trainer.episodes", "must be >= 1");
  require(updates_per_step >= 0, "trainer.updates_per_step", "must be >= 0");
  require(buffer_capacity >= batch, "trainer.buffer_capacity", "must be >= trainer.batch");
  require(std::isfinite(grad_clip), "trainer.grad_clip", "must be finite");
  require(explore_sigma_start >= 0.0, "trainer.explore_sigma_start", "must be >= 0");
  require(explore_sigma_end >= 0.0, "trainer.explore_sigma_end", "must be >= 0");
}

void DiffusionConfig::validate() const {
  require(steps >= 1, "diffusion.steps", "must be >= 1");
  require(beta_min > 0.0, "diffusion.beta_min", "must be > 0");
  require(beta_max > beta_min && std::isfinite(beta_max), "diffusion.beta_max", "must exceed diffusion.beta_min");
  require(embed_dim > 0 && embed_dim % 2 == 0, "diffusion.embed_dim", "must be positive and even");
  require(x0_clip >= 0.0 && std::isfinite(x0_clip), "diffusion.x0_clip", "must be finite and >= 0");
}

void NetworkConfig::validate() const {
  auto check = [](const std::vector<int>& widths, const char* key) {
    require(!widths.empty(), key, "needs at least one hidden layer");
    for (int w : widths) require(w > 0, key, "widths must be positive");
  };
  check(denoiser_hidden, "diffusion.denoiser_hidden");
  check(critic_hidden, "trainer.critic_hidden");
  check(mlp_actor_hidden, "trainer.mlp_actor_hidden");
}

AgentSpec make_agent_spec(AgentKind kind, const env::EnvConfig& env, const TrainerConfig& trainer,
                          const DiffusionConfig& diffusion, const NetworkConfig& nets) {
  AgentSpec s;
  s.kind = kind;
  s.obs_dim = env.obs_dim();
  s.action_dim = env.action_dim();
  s.denoiser_hidden = nets.denoiser_hidden;
  s.critic_hidden = nets.critic_hidden;
  s.mlp_actor_hidden = nets.mlp_actor_hidden;
  s.diffusion_steps = diffusion.steps;
  s.beta_min = diffusion.beta_min;
  s.beta_max = diffusion.beta_max;
  s.embed_dim = diffusion.embed_dim;
  s.x0_clip = diffusion.x0_clip;
  s.actor_lr = trainer.actor_lr;
  s.critic_lr = trainer.critic_lr;
  return s;
}

double exploration_sigma(const TrainerConfig& cfg, int episode) {
  if (!cfg.explore) return 0.0;
  if (cfg.episodes <= 1) return cfg.explore_sigma_start;
  const double frac = std::clamp(static_cast<double>(episode) / (cfg.episodes - 1), 0.0, 1.0);
  return cfg.explore_sigma_start + (cfg.explore_sigma_end - cfg.explore_sigma_start) * frac;
}

TrainResult train_run(const env::EnvConfig& env_cfg, const TrainerConfig& cfg,
                      const DiffusionConfig& diffusion, const NetworkConfig& networks,
                      AgentKind kind, const EpisodeCallback& on_episode) {
  env_cfg.validate();
  cfg.validate();
  diffusion.validate();

  TrainResult result;
  result.nets = make_agent<Real>(make_agent_spec(kind, env_cfg, cfg, diffusion, networks), cfg.seed);
  AgentNets<Real>& nets = result.nets;

  std::mt19937_64 act_rng = stream(cfg.seed, 1);
  std::mt19937_64 replay_rng = stream(cfg.seed, 2);
  std::mt19937_64 update_rng = stream(cfg.seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);

  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  UpdateConfig ucfg;
  ucfg.gamma = cfg.gamma;
  ucfg.grad_clip = cfg.grad_clip;
  ucfg.target_chain_noise = diffusion.train_chain_noise;
  ucfg.actor_chain_noise = diffusion.train_chain_noise;

  const int action_dim = env_cfg.action_dim();
  const auto warmup = static_cast<std::size_t>(cfg.warmup);
  const auto batch_size = static_cast<std::size_t>(cfg.batch);

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    const auto t0 = std::chrono::steady_clock::now();
    const double sigma = exploration_sigma(cfg, episode);
    auto [state, obs] = env::reset(env_cfg);

    EpisodeMetrics m;
    m.episode = episode;
    double actor_loss_sum = 0.0;
    double critic_loss_sum = 0.0;

    while (!state.done) {
      std::vector<double> raw(action_dim);
      if (buffer.size() < warmup) {
        for (double& r : raw) r = normal(act_rng);
      } else {
        const nn::Mat<Real> a =
            policy_act(nets.actor, column(obs), act_rng, diffusion.train_chain_noise);
        for (int i = 0; i < action_dim; ++i) raw[i] = static_cast<double>(a(i, 0)) + sigma * normal(act_rng);
      }

      env::StepResult sr = env::step(state, raw, env_cfg);
      m.reward_mean += sr.reward;
      m.dpp_mean += sr.info.dpp;
      m.rate_mean_mbps += sr.info.sum_rate_mbps;
      m.energy_mean_j += sr.info.energy_j;
      ++m.steps;

      buffer.push({obs, raw, sr.reward, sr.obs, sr.done});
      state = std::move(sr.state);
      obs = std::move(sr.obs);

      if (buffer.size() >= warmup && buffer.size() >= batch_size) {
        for (int u = 0; u < cfg.updates_per_step; ++u) {
          const auto picks = buffer.sample(batch_size, replay_rng);
          const Batch<Real> b = make_batch<Real>(picks);
          const double closs = critic_update(nets, b, ucfg, update_rng);
          const double aloss = actor_update(nets, b, ucfg, update_rng);
          soft_update(nets.target_critic, nets.critic, cfg.tau);
          soft_update(nets.target_actor.params, nets.actor.params, cfg.tau);
          if (!std::isfinite(closs) || !std::isfinite(aloss)) {
            throw std::runtime_error("non-finite loss in episode " + std::to_string(episode));
          }
          critic_loss_sum += closs;
          actor_loss_sum += aloss;
          ++m.updates;
          ++result.total_updates;
        }
      }
    }

    const double steps = m.steps;
    m.reward_mean /= steps;
    m.dpp_mean /= steps;
    m.rate_mean_mbps /= steps;
    m.energy_mean_j /= steps;
    m.queue_final = state.queue.queue(0);
    if (m.updates > 0) {
      m.actor_loss = actor_loss_sum / m.updates;
      m.critic_loss = critic_loss_sum / m.updates;
    }
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.push_back(m);
    if (on_episode) on_episode(m, nets);
  }
  return result;
}

}  // namespace lyapgdm::rl
