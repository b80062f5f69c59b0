#include "lyapgdm/agent.hpp"

#include <string>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::rl {

using nn::Mat;

std::string_view to_string(AgentKind kind) {
  return kind == AgentKind::gdm_ddpg ? "gdm-ddpg" : "mlp-ddpg";
}

AgentKind agent_kind_from_string(std::string_view name) {
  if (name == "gdm-ddpg") return AgentKind::gdm_ddpg;
  if (name == "mlp-ddpg") return AgentKind::mlp_ddpg;
  throw ConfigError("unknown agent kind '" + std::string(name) + "'");
}

nn::MlpSpec AgentSpec::actor_spec() const {
  std::vector<int> widths;
  if (kind == AgentKind::gdm_ddpg) {
    widths.push_back(action_dim + obs_dim + embed_dim);
    widths.insert(widths.end(), denoiser_hidden.begin(), denoiser_hidden.end());
    widths.push_back(action_dim);
    return nn::MlpSpec::make(widths, nn::Activation::silu, nn::Activation::identity);
  }
  widths.push_back(obs_dim);
  widths.insert(widths.end(), mlp_actor_hidden.begin(), mlp_actor_hidden.end());
  widths.push_back(action_dim);
  return nn::MlpSpec::make(widths, nn::Activation::relu, nn::Activation::tanh);
}

nn::MlpSpec AgentSpec::critic_spec() const {
  std::vector<int> widths{obs_dim + action_dim};
  widths.insert(widths.end(), critic_hidden.begin(), critic_hidden.end());
  widths.push_back(1);
  return nn::MlpSpec::make(widths, nn::Activation::relu, nn::Activation::identity);
}

template <typename Scalar>
Mat<Scalar> policy_act(const PolicyNet<Scalar>& policy, const Mat<Scalar>& obs, std::mt19937_64& rng,
                       bool chain_noise, PolicyTrace<Scalar>* trace) {
  if (policy.kind == AgentKind::gdm_ddpg) {
    return diffusion::sample_actions(obs, policy.params, policy.spec, policy.schedule, policy.layout,
                                     rng, chain_noise, trace ? &trace->chain : nullptr);
  }
  return nn::mlp_forward_batch(policy.params, policy.spec, obs, trace ? &trace->tape : nullptr);
}

template <typename Scalar>
void policy_backward(PolicyNet<Scalar>& policy, const PolicyTrace<Scalar>& trace,
                     const Mat<Scalar>& d_action) {
  if (policy.kind == AgentKind::gdm_ddpg) {
    diffusion::backprop_through_chain(trace.chain, policy.schedule, policy.params, policy.spec,
                                      policy.layout, d_action);
  } else {
    nn::mlp_backward_batch(policy.params, policy.spec, trace.tape, d_action, nn::GradMode::full);
  }
}

template <typename Scalar>
AgentNets<Scalar> make_agent(const AgentSpec& spec, std::uint64_t seed) {
  AgentNets<Scalar> nets;
  nets.actor.kind = spec.kind;
  nets.actor.spec = spec.actor_spec();
  nets.actor.params = nn::mlp_init<Scalar>(nets.actor.spec, seed);
  if (spec.kind == AgentKind::gdm_ddpg) {
    nets.actor.schedule = diffusion::make_schedule(spec.diffusion_steps, spec.beta_min, spec.beta_max);
    nets.actor.layout = {spec.action_dim, spec.obs_dim, spec.embed_dim, spec.x0_clip};
    nets.actor.layout.check(nets.actor.spec);
  }
  nets.target_actor = nets.actor;
  nets.critic_spec = spec.critic_spec();
  nets.critic = nn::mlp_init<Scalar>(nets.critic_spec, seed ^ 0x9E3779B97F4A7C15ULL);
  nets.target_critic = nets.critic;
  nets.actor_adam = nn::AdamState<Scalar>(nets.actor.params.size(), spec.actor_lr);
  nets.critic_adam = nn::AdamState<Scalar>(nets.critic.size(), spec.critic_lr);
  return nets;
}

template <typename Scalar>
Batch<Scalar> make_batch(std::span<const env::Transition* const> transitions) {
  if (transitions.empty()) throw UsageError("make_batch: empty batch");
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const auto obs_dim = static_cast<Eigen::Index>(transitions.front()->obs.size());
  const auto act_dim = static_cast<Eigen::Index>(transitions.front()->action_raw.size());
  Batch<Scalar> b;
  b.obs.resize(obs_dim, n);
  b.obs_next.resize(obs_dim, n);
  b.actions.resize(act_dim, n);
  b.rewards.resize(n);
  b.done.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const env::Transition& t = *transitions[j];
    for (Eigen::Index i = 0; i < obs_dim; ++i) {
      b.obs(i, j) = static_cast<Scalar>(t.obs[i]);
      b.obs_next(i, j) = static_cast<Scalar>(t.obs_next[i]);
    }
    for (Eigen::Index i = 0; i < act_dim; ++i) b.actions(i, j) = static_cast<Scalar>(t.action_raw[i]);
    b.rewards(j) = static_cast<Scalar>(t.reward);
    b.done(j) = t.done ? Scalar(1) : Scalar(0);
  }
  return b;
}

namespace {

template <typename Scalar>
Mat<Scalar> stack(const Mat<Scalar>& top, const Mat<Scalar>& bottom) {
  Mat<Scalar> m(top.rows() + bottom.rows(), top.cols());
  m.topRows(top.rows()) = top;
  m.bottomRows(bottom.rows()) = bottom;
  return m;
}

}  // namespace

template <typename Scalar>
double critic_loss_and_grad(AgentNets<Scalar>& nets, const Batch<Scalar>& batch,
                            const UpdateConfig& cfg, std::mt19937_64& rng) {
  const auto n = batch.obs.cols();
  const Mat<Scalar> next_actions =
      policy_act(nets.target_actor, batch.obs_next, rng, cfg.target_chain_noise);
  const Mat<Scalar> q_next =
      nn::mlp_forward_batch(nets.target_critic, nets.critic_spec, stack(batch.obs_next, next_actions));
  const auto gamma = static_cast<Scalar>(cfg.gamma);
  const nn::Vec<Scalar> target =
      batch.rewards.array() + gamma * (Scalar(1) - batch.done.array()) * q_next.row(0).transpose().array();

  nn::Tape<Scalar> tape;
  const Mat<Scalar> q =
      nn::mlp_forward_batch(nets.critic, nets.critic_spec, stack(batch.obs, batch.actions), &tape);
  const nn::Vec<Scalar> err = q.row(0).transpose() - target;
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) loss += static_cast<double>(err(j)) * static_cast<double>(err(j));
  loss /= static_cast<double>(n);

  const Mat<Scalar> d_q = (Scalar(2) / static_cast<Scalar>(n)) * err.transpose();
  nn::mlp_backward_batch(nets.critic, nets.critic_spec, tape, d_q, nn::GradMode::full);
  return loss;
}

template <typename Scalar>
double critic_update(AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const UpdateConfig& cfg,
                     std::mt19937_64& rng) {
  nets.critic.zero_grads();
  const double loss = critic_loss_and_grad(nets, batch, cfg, rng);
  if (cfg.grad_clip > 0.0) nn::clip_grad_norm(nets.critic, cfg.grad_clip);
  nn::adam_step(nets.critic, nets.critic_adam);
  nets.critic.zero_grads();
  return loss;
}

template <typename Scalar>
double actor_loss_and_grad(AgentNets<Scalar>& nets, const Mat<Scalar>& obs, const UpdateConfig& cfg,
                           std::mt19937_64& rng) {
  const auto n = obs.cols();
  PolicyTrace<Scalar> trace;
  const Mat<Scalar> actions = policy_act(nets.actor, obs, rng, cfg.actor_chain_noise, &trace);
  nn::Tape<Scalar> critic_tape;
  const Mat<Scalar> q =
      nn::mlp_forward_batch(nets.critic, nets.critic_spec, stack(obs, actions), &critic_tape);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) loss -= static_cast<double>(q(0, j));
  loss /= static_cast<double>(n);

  const Mat<Scalar> d_q = Mat<Scalar>::Constant(1, n, Scalar(-1) / static_cast<Scalar>(n));
  const Mat<Scalar> d_input =
      nn::mlp_backward_batch(nets.critic, nets.critic_spec, critic_tape, d_q, nn::GradMode::input_only);
  policy_backward(nets.actor, trace, Mat<Scalar>(d_input.bottomRows(actions.rows())));
  return loss;
}

template <typename Scalar>
double actor_update(AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const UpdateConfig& cfg,
                    std::mt19937_64& rng) {
  nets.actor.params.zero_grads();
  const double loss = actor_loss_and_grad(nets, batch.obs, cfg, rng);
  if (cfg.grad_clip > 0.0) nn::clip_grad_norm(nets.actor.params, cfg.grad_clip);
  nn::adam_step(nets.actor.params, nets.actor_adam);
  nets.actor.params.zero_grads();
  return loss;
}

template <typename Scalar>
void soft_update(nn::ParamTensor<Scalar>& target, const nn::ParamTensor<Scalar>& online, double tau) {
  if (target.size() != online.size() || target.layers.size() != online.layers.size()) {
    throw UsageError("soft_update: parameter shapes differ");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw UsageError("soft_update: tau must lie in [0, 1]");
  const auto t = static_cast<Scalar>(tau);
  const auto keep = static_cast<Scalar>(1.0 - tau);
  for (std::size_t i = 0; i < target.size(); ++i) {
    target.values[i] = t * online.values[i] + keep * target.values[i];
  }
  target.touch();
}

#define LYAPGDM_INSTANTIATE(S)                                                                     \
  template Mat<S> policy_act<S>(const PolicyNet<S>&, const Mat<S>&, std::mt19937_64&, bool,        \
                                PolicyTrace<S>*);                                                  \
  template void policy_backward<S>(PolicyNet<S>&, const PolicyTrace<S>&, const Mat<S>&);           \
  template AgentNets<S> make_agent<S>(const AgentSpec&, std::uint64_t);                            \
  template Batch<S> make_batch<S>(std::span<const env::Transition* const>);                        \
  template double critic_loss_and_grad<S>(AgentNets<S>&, const Batch<S>&, const UpdateConfig&,     \
                                          std::mt19937_64&);                                       \
  template double critic_update<S>(AgentNets<S>&, const Batch<S>&, const UpdateConfig&,            \
                                   std::mt19937_64&);                                              \
  template double actor_loss_and_grad<S>(AgentNets<S>&, const Mat<S>&, const UpdateConfig&,        \
                                         std::mt19937_64&);                                        \
  template double actor_update<S>(AgentNets<S>&, const Batch<S>&, const UpdateConfig&,             \
                                  std::mt19937_64&);                                               \
  template void soft_update<S>(nn::ParamTensor<S>&, const nn::ParamTensor<S>&, double);

LYAPGDM_INSTANTIATE(float)
LYAPGDM_INSTANTIATE(double)

#undef LYAPGDM_INSTANTIATE

}  // namespace lyapgdm::rl
