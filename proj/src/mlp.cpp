#include "lyapgdm/mlp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::nn {

namespace {

std::atomic<std::uint64_t> g_version_counter{0};

std::uint64_t next_version() { return ++g_version_counter; }

template <typename Scalar>
void apply_activation(Activation act, const Mat<Scalar>& z, Mat<Scalar>& a) {
  switch (act) {
    case Activation::relu:
      a = z.array().max(Scalar(0));
      break;
    case Activation::silu:
      a = z.array() / (Scalar(1) + (-z.array()).exp());
      break;
    case Activation::tanh:
      a = z.array().tanh();
      break;
    case Activation::identity:
      a = z;
      break;
  }
}

// grad <- grad * act'(z), using the stored activation where cheaper.
template <typename Scalar>
void activation_backward(Activation act, const Mat<Scalar>& z, const Mat<Scalar>& a,
                         Mat<Scalar>& grad) {
  switch (act) {
    case Activation::relu:
      grad = (z.array() > Scalar(0)).select(grad.array(), Scalar(0)).matrix();
      break;
    case Activation::silu: {
      const auto sig = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).eval();
      grad.array() *= sig * (Scalar(1) + z.array() * (Scalar(1) - sig));
      break;
    }
    case Activation::tanh:
      grad.array() *= Scalar(1) - a.array().square();
      break;
    case Activation::identity:
      break;
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::silu: return "silu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "silu") return Activation::silu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

MlpSpec MlpSpec::make(std::vector<int> widths, Activation hidden, Activation output) {
  MlpSpec spec;
  const std::size_t n_hidden = widths.size() >= 2 ? widths.size() - 2 : 0;
  spec.widths = std::move(widths);
  spec.hidden.assign(n_hidden, hidden);
  spec.output = output;
  spec.validate();
  return spec;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("mlp spec needs at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw ConfigError("mlp layer widths must be positive");
  }
  if (hidden.size() != widths.size() - 2) {
    throw ConfigError("mlp spec needs one activation per hidden layer");
  }
}

Activation MlpSpec::layer_activation(int layer) const {
  return layer == num_layers() - 1 ? output : hidden[layer];
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l]) * widths[l + 1] + widths[l + 1];
  }
  return n;
}

template <typename Scalar>
ParamTensor<Scalar>::ParamTensor(const MlpSpec& spec) {
  spec.validate();
  std::size_t offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    LayerShape s;
    s.rows = spec.widths[l + 1];
    s.cols = spec.widths[l];
    s.weight_offset = offset;
    offset += static_cast<std::size_t>(s.rows) * s.cols;
    s.bias_offset = offset;
    offset += s.rows;
    layers.push_back(s);
  }
  values.assign(offset, Scalar(0));
  grads.assign(offset, Scalar(0));
  version = next_version();
}

template <typename Scalar>
void ParamTensor<Scalar>::zero_grads() {
  std::fill(grads.begin(), grads.end(), Scalar(0));
}

template <typename Scalar>
void ParamTensor<Scalar>::touch() {
  version = next_version();
}

template <typename Scalar>
Eigen::Map<const Mat<Scalar>> ParamTensor<Scalar>::weight(int l) const {
  const LayerShape& s = layers[l];
  return {values.data() + s.weight_offset, s.rows, s.cols};
}

template <typename Scalar>
Eigen::Map<const Vec<Scalar>> ParamTensor<Scalar>::bias(int l) const {
  const LayerShape& s = layers[l];
  return {values.data() + s.bias_offset, s.rows};
}

template <typename Scalar>
Eigen::Map<Mat<Scalar>> ParamTensor<Scalar>::weight_grad(int l) {
  const LayerShape& s = layers[l];
  return {grads.data() + s.weight_offset, s.rows, s.cols};
}

template <typename Scalar>
Eigen::Map<Vec<Scalar>> ParamTensor<Scalar>::bias_grad(int l) {
  const LayerShape& s = layers[l];
  return {grads.data() + s.bias_offset, s.rows};
}

template <typename Scalar>
ParamTensor<Scalar> mlp_init(const MlpSpec& spec, std::uint64_t seed) {
  ParamTensor<Scalar> p(spec);
  std::mt19937_64 rng(seed);
  for (const LayerShape& s : p.layers) {
    const double bound = std::sqrt(6.0 / (s.rows + s.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = static_cast<std::size_t>(s.rows) * s.cols;
    for (std::size_t i = 0; i < n; ++i) p.values[s.weight_offset + i] = static_cast<Scalar>(dist(rng));
  }
  p.touch();
  return p;
}

template <typename Scalar>
Mat<Scalar> mlp_forward_batch(const ParamTensor<Scalar>& params, const MlpSpec& spec,
                              const Mat<Scalar>& input, Tape<Scalar>* tape) {
  if (input.rows() != spec.input_width()) {
    throw UsageError("mlp_forward: input width " + std::to_string(input.rows()) +
                     " != spec input width " + std::to_string(spec.input_width()));
  }
  if (params.size() != spec.param_count()) {
    throw UsageError("mlp_forward: parameter count does not match spec");
  }
  const int n_layers = spec.num_layers();
  if (tape) {
    tape->version = params.version;
    tape->pre.resize(n_layers);
    tape->post.resize(n_layers + 1);
    tape->post[0] = input;
  }
  Mat<Scalar> a = input;
  Mat<Scalar> z;
  for (int l = 0; l < n_layers; ++l) {
    z.noalias() = params.weight(l) * a;
    z.colwise() += params.bias(l);
    apply_activation(spec.layer_activation(l), z, a);
    if (tape) {
      tape->pre[l] = z;
      tape->post[l + 1] = a;
    }
  }
  return a;
}

template <typename Scalar>
ForwardResult<Scalar> mlp_forward(const ParamTensor<Scalar>& params, const MlpSpec& spec,
                                  std::span<const Scalar> input) {
  Mat<Scalar> x = Eigen::Map<const Mat<Scalar>>(input.data(), static_cast<Eigen::Index>(input.size()), 1);
  ForwardResult<Scalar> r;
  const Mat<Scalar> y = mlp_forward_batch(params, spec, x, &r.tape);
  r.output.assign(y.data(), y.data() + y.size());
  return r;
}

template <typename Scalar>
Mat<Scalar> mlp_backward_batch(ParamTensor<Scalar>& params, const MlpSpec& spec,
                               const Tape<Scalar>& tape, const Mat<Scalar>& output_grad,
                               GradMode mode) {
  const int n_layers = spec.num_layers();
  if (tape.version != params.version || static_cast<int>(tape.pre.size()) != n_layers) {
    throw UsageError("mlp_backward: stale tape (parameters changed since forward)");
  }
  if (output_grad.rows() != spec.output_width() || output_grad.cols() != tape.post[0].cols()) {
    throw UsageError("mlp_backward: output gradient shape mismatch");
  }
  Mat<Scalar> grad = output_grad;
  for (int l = n_layers - 1; l >= 0; --l) {
    activation_backward(spec.layer_activation(l), tape.pre[l], tape.post[l + 1], grad);
    if (mode == GradMode::full) {
      params.weight_grad(l).noalias() += grad * tape.post[l].transpose();
      params.bias_grad(l) += grad.rowwise().sum();
    }
    Mat<Scalar> below;
    below.noalias() = params.weight(l).transpose() * grad;
    grad = std::move(below);
  }
  return grad;
}

template <typename Scalar>
std::vector<Scalar> mlp_backward(ParamTensor<Scalar>& params, const MlpSpec& spec,
                                 const Tape<Scalar>& tape, std::span<const Scalar> output_grad) {
  Mat<Scalar> g = Eigen::Map<const Mat<Scalar>>(output_grad.data(),
                                                static_cast<Eigen::Index>(output_grad.size()), 1);
  const Mat<Scalar> in = mlp_backward_batch(params, spec, tape, g, GradMode::full);
  return {in.data(), in.data() + in.size()};
}

template <typename Scalar>
void adam_step(ParamTensor<Scalar>& params, AdamState<Scalar>& adam) {
  if (adam.m.size() != params.size() || adam.v.size() != params.size()) {
    throw UsageError("adam_step: optimizer state does not match parameter count");
  }
  ++adam.step_count;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step_count));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step_count));
  const auto n = static_cast<Eigen::Index>(params.size());
  Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> p(params.values.data(), n);
  Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> g(params.grads.data(), n);
  Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> m(adam.m.data(), n);
  Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> v(adam.v.data(), n);
  const auto b1 = static_cast<Scalar>(adam.beta1);
  const auto b2 = static_cast<Scalar>(adam.beta2);
  m = b1 * m + (Scalar(1) - b1) * g;
  v = b2 * v + (Scalar(1) - b2) * g.square();
  const auto step = static_cast<Scalar>(adam.lr / bc1);
  const auto inv_bc2 = static_cast<Scalar>(1.0 / bc2);
  const auto eps = static_cast<Scalar>(adam.eps);
  p -= step * m / ((v * inv_bc2).sqrt() + eps);
  params.touch();
}

template <typename Scalar>
double clip_grad_norm(ParamTensor<Scalar>& params, double max_norm) {
  double sq = 0.0;
  for (Scalar g : params.grads) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<Scalar>(max_norm / norm);
    for (Scalar& g : params.grads) g *= scale;
  }
  return norm;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

double finite_diff_check(ParamTensor<double>& params, const MlpSpec& spec,
                         std::span<const double> input, const OutputLoss& loss,
                         std::size_t min_coords, std::uint64_t seed) {
  params.zero_grads();
  auto fwd = mlp_forward(params, spec, std::span<const double>(input));
  const std::vector<double> out_grad = loss.grad(fwd.output);
  mlp_backward(params, spec, fwd.tape, std::span<const double>(out_grad));
  const FlatVec<double> analytic = params.grads;

  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(coords.size(), std::max<std::size_t>(min_coords, 100)));

  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double saved = params.values[i];
    params.values[i] = saved + h;
    const double up = loss.value(mlp_forward(params, spec, input).output);
    params.values[i] = saved - h;
    const double down = loss.value(mlp_forward(params, spec, input).output);
    params.values[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  params.touch();
  params.zero_grads();
  return worst;
}

#define LYAPGDM_INSTANTIATE(S)                                                                   \
  template struct ParamTensor<S>;                                                                \
  template ParamTensor<S> mlp_init<S>(const MlpSpec&, std::uint64_t);                            \
  template Mat<S> mlp_forward_batch<S>(const ParamTensor<S>&, const MlpSpec&, const Mat<S>&,     \
                                       Tape<S>*);                                                \
  template ForwardResult<S> mlp_forward<S>(const ParamTensor<S>&, const MlpSpec&,                \
                                           std::span<const S>);                                  \
  template Mat<S> mlp_backward_batch<S>(ParamTensor<S>&, const MlpSpec&, const Tape<S>&,         \
                                        const Mat<S>&, GradMode);                                \
  template std::vector<S> mlp_backward<S>(ParamTensor<S>&, const MlpSpec&, const Tape<S>&,       \
                                          std::span<const S>);                                   \
  template void adam_step<S>(ParamTensor<S>&, AdamState<S>&);                                    \
  template double clip_grad_norm<S>(ParamTensor<S>&, double);

LYAPGDM_INSTANTIATE(float)
LYAPGDM_INSTANTIATE(double)

#undef LYAPGDM_INSTANTIATE

}  // namespace lyapgdm::nn
