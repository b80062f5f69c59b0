#include "lyapgdm/diffusion.hpp"

#include <cmath>
#include <string>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::diffusion {

using nn::Mat;

namespace {

// Posterior mean mu = mean_x0 * x0 + mean_xk * x_k with
// x0 = (x_k - eps_to_x0 * eps) * inv_sqrt_ab.
struct ClipCoefs {
  double inv_sqrt_ab;
  double eps_to_x0;
  double mean_x0;
  double mean_xk;
};

ClipCoefs clip_coefs(const NoiseSchedule& s, int k) {
  const double ab = s.alpha_bar[k];
  const double ab_prev = s.alpha_bar[k - 1];
  return {1.0 / std::sqrt(ab), std::sqrt(1.0 - ab), s.beta[k] * std::sqrt(ab_prev) / (1.0 - ab),
          (1.0 - ab_prev) * std::sqrt(s.alpha[k]) / (1.0 - ab)};
}

}  // namespace

double NoiseSchedule::eps_coef(int k) const { return beta[k] / std::sqrt(1.0 - alpha_bar[k]); }

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError("diffusion.steps: must be >= 1");
  if (!(beta_min > 0.0) || !(beta_max > beta_min) || !std::isfinite(beta_max)) {
    throw ConfigError("diffusion.beta_min/beta_max: need 0 < beta_min < beta_max");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  s.posterior_var.assign(steps + 1, 0.0);
  const double K = steps;
  for (int k = 1; k <= steps; ++k) {
    const double exponent = beta_min / K + (beta_max - beta_min) * (2.0 * k - 1.0) / (2.0 * K * K);
    s.beta[k] = -std::expm1(-exponent);
    s.alpha[k] = 1.0 - s.beta[k];
    s.alpha_bar[k] = s.alpha_bar[k - 1] * s.alpha[k];
    s.posterior_var[k] = s.beta[k] * (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]);
  }
  return s;
}

std::vector<double> timestep_embedding(int k, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("diffusion.embed_dim: must be positive and even");
  if (k < 0) throw UsageError("timestep_embedding: k must be >= 0");
  std::vector<double> pe(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / dim);
    pe[2 * i] = std::sin(k / freq);
    pe[2 * i + 1] = std::cos(k / freq);
  }
  return pe;
}

std::vector<double> forward_noise(std::span<const double> x0, int k, const NoiseSchedule& schedule,
                                  std::span<const double> eps) {
  if (k < 1 || k > schedule.steps) {
    throw UsageError("forward_noise: k=" + std::to_string(k) + " outside 1.." +
                     std::to_string(schedule.steps));
  }
  if (eps.size() != x0.size()) throw UsageError("forward_noise: eps length mismatch");
  const double a = std::sqrt(schedule.alpha_bar[k]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[k]);
  std::vector<double> xk(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) xk[i] = a * x0[i] + b * eps[i];
  return xk;
}

void DenoiserLayout::check(const nn::MlpSpec& spec) const {
  if (spec.input_width() != input_width()) {
    throw ConfigError("denoiser input width " + std::to_string(spec.input_width()) +
                      " != action_dim + obs_dim + embed_dim = " + std::to_string(input_width()));
  }
  if (spec.output_width() != action_dim) {
    throw ConfigError("denoiser output width " + std::to_string(spec.output_width()) +
                      " != action_dim " + std::to_string(action_dim));
  }
}

template <typename Scalar>
Mat<Scalar> run_chain(const Mat<Scalar>& obs, const Mat<Scalar>& x_start,
                      const std::vector<Mat<Scalar>>& noises, const nn::ParamTensor<Scalar>& params,
                      const nn::MlpSpec& spec, const NoiseSchedule& schedule,
                      const DenoiserLayout& layout, SampleTrace<Scalar>* trace) {
  layout.check(spec);
  const int K = schedule.steps;
  const auto batch = obs.cols();
  if (obs.rows() != layout.obs_dim || x_start.rows() != layout.action_dim || x_start.cols() != batch) {
    throw UsageError("run_chain: observation or start-state shape mismatch");
  }
  if (static_cast<int>(noises.size()) != K + 1) throw UsageError("run_chain: need K+1 noise slots");

  if (trace) {
    trace->steps = K;
    trace->states.assign(K + 1, Mat<Scalar>());
    trace->noises.assign(K + 1, Mat<Scalar>());
    trace->eps_hat.assign(K + 1, Mat<Scalar>());
    trace->x0_hat.assign(K + 1, Mat<Scalar>());
    trace->tapes.assign(K + 1, nn::Tape<Scalar>());
    trace->states[K] = x_start;
  }

  Mat<Scalar> input(layout.input_width(), batch);
  input.middleRows(layout.action_dim, layout.obs_dim) = obs;
  Mat<Scalar> x = x_start;
  for (int k = K; k >= 1; --k) {
    const std::vector<double> emb = timestep_embedding(k, layout.embed_dim);
    for (int r = 0; r < layout.embed_dim; ++r) {
      input.row(layout.action_dim + layout.obs_dim + r).setConstant(static_cast<Scalar>(emb[r]));
    }
    input.topRows(layout.action_dim) = x;
    nn::Tape<Scalar>* tape = trace ? &trace->tapes[k] : nullptr;
    const Mat<Scalar> eps = nn::mlp_forward_batch(params, spec, input, tape);

    Mat<Scalar> next;
    if (layout.x0_clip > 0.0) {
      const ClipCoefs c = clip_coefs(schedule, k);
      Mat<Scalar> x0 = (x - static_cast<Scalar>(c.eps_to_x0) * eps) * static_cast<Scalar>(c.inv_sqrt_ab);
      const auto lim = static_cast<Scalar>(layout.x0_clip);
      next = static_cast<Scalar>(c.mean_x0) * x0.cwiseMax(-lim).cwiseMin(lim) +
             static_cast<Scalar>(c.mean_xk) * x;
      if (trace) trace->x0_hat[k] = std::move(x0);
    } else {
      const auto inv_sqrt_alpha = static_cast<Scalar>(1.0 / std::sqrt(schedule.alpha[k]));
      const auto coef = static_cast<Scalar>(schedule.eps_coef(k));
      next = (x - coef * eps) * inv_sqrt_alpha;
    }
    if (k > 1 && noises[k].size() > 0) {
      if (noises[k].rows() != x.rows() || noises[k].cols() != batch) {
        throw UsageError("run_chain: injected noise shape mismatch");
      }
      next += static_cast<Scalar>(std::sqrt(schedule.posterior_var[k])) * noises[k];
    }
    if (trace) {
      trace->eps_hat[k] = eps;
      if (k > 1) trace->noises[k] = noises[k];
      trace->states[k - 1] = next;
    }
    x = std::move(next);
  }
  return x;
}

template <typename Scalar>
Mat<Scalar> sample_actions(const Mat<Scalar>& obs, const nn::ParamTensor<Scalar>& params,
                           const nn::MlpSpec& spec, const NoiseSchedule& schedule,
                           const DenoiserLayout& layout, std::mt19937_64& rng, bool chain_noise,
                           SampleTrace<Scalar>* trace) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto batch = obs.cols();
  auto draw = [&] {
    Mat<Scalar> m(layout.action_dim, batch);
    for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = static_cast<Scalar>(normal(rng));
    return m;
  };
  const Mat<Scalar> x_start = draw();
  std::vector<Mat<Scalar>> noises(schedule.steps + 1);
  if (chain_noise) {
    for (int k = schedule.steps; k >= 2; --k) noises[k] = draw();
  }
  return run_chain(obs, x_start, noises, params, spec, schedule, layout, trace);
}

template <typename Scalar>
std::vector<Scalar> sample_action(std::span<const Scalar> obs, const nn::ParamTensor<Scalar>& params,
                                  const nn::MlpSpec& spec, const NoiseSchedule& schedule,
                                  const DenoiserLayout& layout, std::mt19937_64& rng,
                                  bool chain_noise, SampleTrace<Scalar>* trace) {
  const Mat<Scalar> o = Eigen::Map<const Mat<Scalar>>(obs.data(), static_cast<Eigen::Index>(obs.size()), 1);
  const Mat<Scalar> a = sample_actions(o, params, spec, schedule, layout, rng, chain_noise, trace);
  return {a.data(), a.data() + a.size()};
}

template <typename Scalar>
Mat<Scalar> backprop_through_chain(const SampleTrace<Scalar>& trace, const NoiseSchedule& schedule,
                                   nn::ParamTensor<Scalar>& params, const nn::MlpSpec& spec,
                                   const DenoiserLayout& layout, const Mat<Scalar>& d_x0) {
  if (trace.steps != schedule.steps || static_cast<int>(trace.tapes.size()) != schedule.steps + 1) {
    throw UsageError("backprop_through_chain: trace was recorded with a different schedule");
  }
  if (d_x0.rows() != layout.action_dim || d_x0.cols() != trace.states[0].cols()) {
    throw UsageError("backprop_through_chain: gradient shape mismatch");
  }
  Mat<Scalar> g = d_x0;
  for (int k = 1; k <= schedule.steps; ++k) {
    if (layout.x0_clip > 0.0) {
      const ClipCoefs c = clip_coefs(schedule, k);
      const Mat<Scalar>& x0 = trace.x0_hat[k];
      if (x0.rows() != g.rows() || x0.cols() != g.cols()) {
        throw UsageError("backprop_through_chain: trace lacks x0 predictions for a clipped chain");
      }
      const auto lim = static_cast<Scalar>(layout.x0_clip);
      const Mat<Scalar> d_x0hat =
          (x0.array().abs() < lim).select(static_cast<Scalar>(c.mean_x0) * g.array(), Scalar(0)).matrix();
      const Mat<Scalar> d_eps = static_cast<Scalar>(-c.eps_to_x0 * c.inv_sqrt_ab) * d_x0hat;
      const Mat<Scalar> d_input = nn::mlp_backward_batch(params, spec, trace.tapes[k], d_eps);
      g = static_cast<Scalar>(c.mean_xk) * g + static_cast<Scalar>(c.inv_sqrt_ab) * d_x0hat +
          d_input.topRows(layout.action_dim);
      continue;
    }
    const auto inv_sqrt_alpha = static_cast<Scalar>(1.0 / std::sqrt(schedule.alpha[k]));
    const auto coef = static_cast<Scalar>(schedule.eps_coef(k));
    const Mat<Scalar> d_eps = (-coef * inv_sqrt_alpha) * g;
    const Mat<Scalar> d_input = nn::mlp_backward_batch(params, spec, trace.tapes[k], d_eps);
    g *= inv_sqrt_alpha;
    g += d_input.topRows(layout.action_dim);
  }
  return g;
}

#define LYAPGDM_INSTANTIATE(S)                                                                     \
  template Mat<S> run_chain<S>(const Mat<S>&, const Mat<S>&, const std::vector<Mat<S>>&,           \
                               const nn::ParamTensor<S>&, const nn::MlpSpec&,                      \
                               const NoiseSchedule&, const DenoiserLayout&, SampleTrace<S>*);      \
  template Mat<S> sample_actions<S>(const Mat<S>&, const nn::ParamTensor<S>&, const nn::MlpSpec&,  \
                                    const NoiseSchedule&, const DenoiserLayout&,                   \
                                    std::mt19937_64&, bool, SampleTrace<S>*);                      \
  template std::vector<S> sample_action<S>(std::span<const S>, const nn::ParamTensor<S>&,          \
                                           const nn::MlpSpec&, const NoiseSchedule&,               \
                                           const DenoiserLayout&, std::mt19937_64&, bool,          \
                                           SampleTrace<S>*);                                       \
  template Mat<S> backprop_through_chain<S>(const SampleTrace<S>&, const NoiseSchedule&,           \
                                            nn::ParamTensor<S>&, const nn::MlpSpec&,               \
                                            const DenoiserLayout&, const Mat<S>&);

LYAPGDM_INSTANTIATE(float)
LYAPGDM_INSTANTIATE(double)

#undef LYAPGDM_INSTANTIATE

}  // namespace lyapgdm::diffusion
