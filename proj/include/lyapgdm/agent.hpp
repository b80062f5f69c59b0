#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lyapgdm/diffusion.hpp"
#include "lyapgdm/env.hpp"
#include "lyapgdm/mlp.hpp"

namespace lyapgdm::rl {

enum class AgentKind { gdm_ddpg, mlp_ddpg };

std::string_view to_string(AgentKind kind);
AgentKind agent_kind_from_string(std::string_view name);

// Architecture and optimiser settings shared by both agent kinds.
struct AgentSpec {
  AgentKind kind = AgentKind::gdm_ddpg;
  int obs_dim = 8;
  int action_dim = 5;
  std::vector<int> denoiser_hidden{128, 128, 128};
  std::vector<int> critic_hidden{256, 256};
  std::vector<int> mlp_actor_hidden{256, 256};
  int diffusion_steps = 5;
  double beta_min = 0.1;
  double beta_max = 10.0;
  int embed_dim = 16;
  double x0_clip = 1.0;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;

  nn::MlpSpec actor_spec() const;
  nn::MlpSpec critic_spec() const;  // input = obs ++ raw action
};

// Actor network plus whatever the kind needs to turn observations into raw actions.
template <typename Scalar>
struct PolicyNet {
  AgentKind kind = AgentKind::gdm_ddpg;
  nn::MlpSpec spec;
  nn::ParamTensor<Scalar> params;
  diffusion::NoiseSchedule schedule;   // gdm only
  diffusion::DenoiserLayout layout;    // gdm only
};

template <typename Scalar>
struct PolicyTrace {
  diffusion::SampleTrace<Scalar> chain;  // gdm
  nn::Tape<Scalar> tape;                 // mlp
};

// Raw (pre-squash) actions for a batch of observations (one per column).
// `chain_noise` toggles the injected reverse-chain noise of the gdm actor.
template <typename Scalar>
nn::Mat<Scalar> policy_act(const PolicyNet<Scalar>& policy, const nn::Mat<Scalar>& obs,
                           std::mt19937_64& rng, bool chain_noise,
                           PolicyTrace<Scalar>* trace = nullptr);

// Accumulates actor parameter grads for dL/d(raw action).
template <typename Scalar>
void policy_backward(PolicyNet<Scalar>& policy, const PolicyTrace<Scalar>& trace,
                     const nn::Mat<Scalar>& d_action);

template <typename Scalar>
struct AgentNets {
  PolicyNet<Scalar> actor;
  PolicyNet<Scalar> target_actor;
  nn::MlpSpec critic_spec;
  nn::ParamTensor<Scalar> critic;
  nn::ParamTensor<Scalar> target_critic;
  nn::AdamState<Scalar> actor_adam;
  nn::AdamState<Scalar> critic_adam;
};

// Online networks from `seed`, targets as exact copies.
template <typename Scalar>
AgentNets<Scalar> make_agent(const AgentSpec& spec, std::uint64_t seed);

template <typename Scalar>
struct Batch {
  nn::Mat<Scalar> obs;       // obs_dim x B
  nn::Mat<Scalar> actions;   // action_dim x B
  nn::Mat<Scalar> obs_next;  // obs_dim x B
  nn::Vec<Scalar> rewards;   // B
  nn::Vec<Scalar> done;      // B, 1 when terminal
};

template <typename Scalar>
Batch<Scalar> make_batch(std::span<const env::Transition* const> transitions);

struct UpdateConfig {
  double gamma = 0.99;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  bool target_chain_noise = true;
  bool actor_chain_noise = true;
};

// One TD step on the critic: y = r + gamma (1 - done) Q'(s', pi'(s')).
// Returns the loss before the step; critic grads are zeroed afterwards.
template <typename Scalar>
double critic_update(AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const UpdateConfig& cfg,
                     std::mt19937_64& rng);

// Mean TD loss and its critic gradient without stepping (used by critic_update and tests).
template <typename Scalar>
double critic_loss_and_grad(AgentNets<Scalar>& nets, const Batch<Scalar>& batch,
                            const UpdateConfig& cfg, std::mt19937_64& rng);

// One policy step on loss = -mean Q(s, pi(s)) with the critic frozen.
template <typename Scalar>
double actor_update(AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const UpdateConfig& cfg,
                    std::mt19937_64& rng);

// Actor loss with its gradient accumulated into nets.actor.params.grads.
template <typename Scalar>
double actor_loss_and_grad(AgentNets<Scalar>& nets, const nn::Mat<Scalar>& obs,
                           const UpdateConfig& cfg, std::mt19937_64& rng);

// target <- tau * online + (1 - tau) * target, elementwise.
template <typename Scalar>
void soft_update(nn::ParamTensor<Scalar>& target, const nn::ParamTensor<Scalar>& online, double tau);

}  // namespace lyapgdm::rl
