#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lyapgdm/mlp.hpp"

namespace lyapgdm::diffusion {

// Per-step tables indexed k = 1..K (entry 0 is the k = 0 convention:
// beta = 0, alpha = alpha_bar = 1, posterior_var = 0).
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_var;

  // beta_k / sqrt(1 - alpha_bar_k): weight on the predicted noise.
  double eps_coef(int k) const;
};

// Variance-preserving discretisation
//   beta_k = 1 - exp(-beta_min/K - (beta_max - beta_min)(2k - 1) / (2K^2)).
NoiseSchedule make_schedule(int steps, double beta_min = 0.1, double beta_max = 10.0);

// Sinusoidal encoding: pe[2i] = sin(k / 10000^(2i/dim)), pe[2i+1] = cos(...).
std::vector<double> timestep_embedding(int k, int dim = 16);

// x_k = sqrt(alpha_bar_k) x0 + sqrt(1 - alpha_bar_k) eps.
std::vector<double> forward_noise(std::span<const double> x0, int k, const NoiseSchedule& schedule,
                                  std::span<const double> eps);

struct DenoiserLayout {
  int action_dim = 0;
  int obs_dim = 0;
  int embed_dim = 16;
  // When > 0 each reverse step predicts x0 from the noise estimate, clips it
  // to [-x0_clip, x0_clip] and takes the posterior mean. 0 keeps the plain
  // epsilon update.
  double x0_clip = 0.0;

  int input_width() const { return action_dim + obs_dim + embed_dim; }
  // Throws ConfigError when the denoiser spec does not fit this layout.
  void check(const nn::MlpSpec& spec) const;
};

// Everything the reverse chain touched, for exact replay and backprop.
// states[k] holds x_k (k = 0..K); noises[k] holds z_k and eps_hat[k] the
// predicted noise (k = 1..K); tapes[k] is the denoiser tape of step k.
// x0_hat[k] is the unclipped x0 prediction, filled only when clipping.
template <typename Scalar>
struct SampleTrace {
  int steps = 0;
  std::vector<nn::Mat<Scalar>> states;
  std::vector<nn::Mat<Scalar>> noises;
  std::vector<nn::Mat<Scalar>> eps_hat;
  std::vector<nn::Mat<Scalar>> x0_hat;
  std::vector<nn::Tape<Scalar>> tapes;
};

// Runs x_K -> x_0 with caller-supplied injected noises (noises[k] for
// k = 2..K; z_1 is always zero). Columns of `obs` and `x_start` are samples.
template <typename Scalar>
nn::Mat<Scalar> run_chain(const nn::Mat<Scalar>& obs, const nn::Mat<Scalar>& x_start,
                          const std::vector<nn::Mat<Scalar>>& noises,
                          const nn::ParamTensor<Scalar>& params, const nn::MlpSpec& spec,
                          const NoiseSchedule& schedule, const DenoiserLayout& layout,
                          SampleTrace<Scalar>* trace = nullptr);

// Draws x_K ~ N(0, I) and the injected noises from `rng`, then runs the chain.
// With chain_noise == false every z_k is zero (x_K is still random).
template <typename Scalar>
nn::Mat<Scalar> sample_actions(const nn::Mat<Scalar>& obs, const nn::ParamTensor<Scalar>& params,
                               const nn::MlpSpec& spec, const NoiseSchedule& schedule,
                               const DenoiserLayout& layout, std::mt19937_64& rng,
                               bool chain_noise = true, SampleTrace<Scalar>* trace = nullptr);

// Single-observation convenience wrapper.
template <typename Scalar>
std::vector<Scalar> sample_action(std::span<const Scalar> obs, const nn::ParamTensor<Scalar>& params,
                                  const nn::MlpSpec& spec, const NoiseSchedule& schedule,
                                  const DenoiserLayout& layout, std::mt19937_64& rng,
                                  bool chain_noise = true, SampleTrace<Scalar>* trace = nullptr);

// Chain rule from dL/dx_0 back to dL/dx_K with the injected noises held
// constant. Denoiser parameter grads accumulate into `params`; the return
// value is dL/dx_K.
template <typename Scalar>
nn::Mat<Scalar> backprop_through_chain(const SampleTrace<Scalar>& trace, const NoiseSchedule& schedule,
                                       nn::ParamTensor<Scalar>& params, const nn::MlpSpec& spec,
                                       const DenoiserLayout& layout, const nn::Mat<Scalar>& d_x0);

}  // namespace lyapgdm::diffusion
