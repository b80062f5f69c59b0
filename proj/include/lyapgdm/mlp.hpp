#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lyapgdm::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Flat buffers with a fixed 64-byte base alignment, so vectorised kernels take
// the same code path (and round identically) wherever the buffer lands.
template <typename Scalar>
using FlatVec = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

enum class Activation { relu, silu, tanh, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct MlpSpec {
  std::vector<int> widths;              // input, hidden..., output
  std::vector<Activation> hidden;       // one per hidden layer
  Activation output = Activation::identity;

  static MlpSpec make(std::vector<int> widths, Activation hidden, Activation output);

  void validate() const;  // throws ConfigError
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  Activation layer_activation(int layer) const;
  std::size_t param_count() const;

  bool operator==(const MlpSpec&) const = default;
};

struct LayerShape {
  int rows = 0;  // fan-out
  int cols = 0;  // fan-in
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

// Flat parameter storage. Layer l's weight block is rows x cols column-major,
// followed by its bias. Every mutation through the kernel bumps `version` so
// tapes recorded against older values are rejected by backward.
template <typename Scalar>
struct ParamTensor {
  FlatVec<Scalar> values;
  FlatVec<Scalar> grads;
  std::vector<LayerShape> layers;
  std::uint64_t version = 0;

  ParamTensor() = default;
  explicit ParamTensor(const MlpSpec& spec);

  std::size_t size() const { return values.size(); }
  void zero_grads();
  void touch();  // mark values as modified

  Eigen::Map<const Mat<Scalar>> weight(int l) const;
  Eigen::Map<const Vec<Scalar>> bias(int l) const;
  Eigen::Map<Mat<Scalar>> weight_grad(int l);
  Eigen::Map<Vec<Scalar>> bias_grad(int l);
};

template <typename Scalar>
struct Tape {
  std::uint64_t version = 0;
  std::vector<Mat<Scalar>> pre;   // pre-activation of each layer
  std::vector<Mat<Scalar>> post;  // post[0] = input, post[l+1] = activation of layer l
};

enum class GradMode {
  full,       // accumulate parameter grads and return the input grad
  input_only  // only the input grad; parameter grads untouched
};

// Glorot-uniform weights, zero biases, deterministic per seed. Draws happen in
// double so float and double tensors from one seed hold the same values.
template <typename Scalar>
ParamTensor<Scalar> mlp_init(const MlpSpec& spec, std::uint64_t seed);

// Batched forward; each column of `input` is one sample.
template <typename Scalar>
Mat<Scalar> mlp_forward_batch(const ParamTensor<Scalar>& params, const MlpSpec& spec,
                              const Mat<Scalar>& input, Tape<Scalar>* tape = nullptr);

template <typename Scalar>
struct ForwardResult {
  std::vector<Scalar> output;
  Tape<Scalar> tape;
};

template <typename Scalar>
ForwardResult<Scalar> mlp_forward(const ParamTensor<Scalar>& params, const MlpSpec& spec,
                                  std::span<const Scalar> input);

// Reverse pass. Parameter grads accumulate (callers zero them per batch).
template <typename Scalar>
Mat<Scalar> mlp_backward_batch(ParamTensor<Scalar>& params, const MlpSpec& spec,
                               const Tape<Scalar>& tape, const Mat<Scalar>& output_grad,
                               GradMode mode = GradMode::full);

template <typename Scalar>
std::vector<Scalar> mlp_backward(ParamTensor<Scalar>& params, const MlpSpec& spec,
                                 const Tape<Scalar>& tape, std::span<const Scalar> output_grad);

template <typename Scalar>
struct AdamState {
  FlatVec<Scalar> m;
  FlatVec<Scalar> v;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(n, 0), v(n, 0), lr(learning_rate) {}
};

template <typename Scalar>
void adam_step(ParamTensor<Scalar>& params, AdamState<Scalar>& adam);

// Rescales grads to global L2 norm <= max_norm; returns the norm before scaling.
template <typename Scalar>
double clip_grad_norm(ParamTensor<Scalar>& params, double max_norm);

// Scalar loss over the network output together with its output gradient.
struct OutputLoss {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> grad;
};

// Max relative error between backprop and central differences (step 1e-5)
// over a seeded random subsample of at least `min_coords` parameters.
double finite_diff_check(ParamTensor<double>& params, const MlpSpec& spec,
                         std::span<const double> input, const OutputLoss& loss,
                         std::size_t min_coords = 100, std::uint64_t seed = 0);

// Relative error used by the gradient checks.
double relative_error(double analytic, double numeric);

}  // namespace lyapgdm::nn
