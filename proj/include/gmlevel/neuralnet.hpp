#ifndef GMLEVEL_NEURALNET_HPP
#define GMLEVEL_NEURALNET_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "gmlevel/matrix.hpp"
#include "gmlevel/random.hpp"

namespace gmlevel {

enum class Activation { Relu, Softplus, Sigmoid, Linear };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

double softplus(double x);
double sigmoid(double x);

/// y = act(W x + b) with W stored out x in.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::Linear;

  std::size_t in() const { return weight.cols; }
  std::size_t out() const { return weight.rows; }
  bool operator==(const DenseLayer&) const = default;
};

struct LayerGrad {
  Matrix weight;
  std::vector<double> bias;
};

/// Gradients shaped like a DenseNet's parameters.
struct NetGrad {
  std::vector<LayerGrad> layers;

  void zero();
  /// Flattened in parameter order: layer 0 weights, layer 0 bias, layer 1 ...
  std::vector<double> flat() const;
};

/// Per-layer inputs and pre-activations recorded by a forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preacts;
  std::vector<Matrix> outputs;
  bool valid() const { return !inputs.empty(); }
  void clear() {
    inputs.clear();
    preacts.clear();
    outputs.clear();
  }
};

class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// sizes = {in, h1, ..., out}; one activation per layer. ReLU layers get
  /// He-uniform weights, the rest Xavier-uniform; biases start at zero.
  static DenseNet make(const std::vector<std::size_t>& sizes,
                       const std::vector<Activation>& activations, Rng& rng);

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t parameter_count() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  /// Batch forward; rows are items.
  Matrix forward(const Matrix& x, ForwardCache& cache) const;
  Matrix forward(const Matrix& x) const;
  std::vector<double> forward(std::span<const double> x) const;

  /// Accumulates parameter gradients into `grads` (which must be shaped by
  /// zero_grad) and returns the gradient with respect to the input batch.
  /// `grad_out` is the gradient of the loss with respect to the outputs.
  Matrix backward(const ForwardCache& cache, const Matrix& grad_out, NetGrad& grads) const;
  /// Same, with the gradient given at the last layer's pre-activation; used
  /// for the fused sigmoid/cross-entropy and softmax/cross-entropy heads.
  Matrix backward_from_preact(const ForwardCache& cache, const Matrix& grad_preact,
                              NetGrad& grads) const;

  NetGrad zero_grad() const;

  /// Visits every parameter in flat() order.
  void for_each_parameter(const std::function<void(double&)>& fn);

  bool operator==(const DenseNet&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------- Adam

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update of `params` in place. Moment vectors are
/// sized on first use.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);
void adam_step(AdamState& state, DenseNet& net, const NetGrad& grads);

// ---------------------------------------------------------------- losses

inline constexpr double kProbClamp = 1e-7;

/// Sum over entries of -[t ln o + (1-t) ln(1-o)], o clamped to
/// [1e-7, 1 - 1e-7]. If `grad` is non-empty it receives dL/do (evaluated at
/// the clamped output).
double bce_loss(std::span<const double> output, std::span<const double> target,
                std::span<double> grad = {});

/// -ln softmax(logits)[label]; `grad` (optional) receives dL/dlogits.
double softmax_cross_entropy(std::span<const double> logits, std::size_t label,
                             std::span<double> grad = {});

std::vector<double> softmax(std::span<const double> logits);

// ---------------------------------------------------------------- Gaussians

/// Diagonal Gaussian given by means and variances (not standard deviations).
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> variance;
};

/// KL(q || p) between diagonal Gaussians. Any non-empty gradient span is
/// filled with the derivative with respect to the matching input.
double kl_diag(std::span<const double> mean_q, std::span<const double> var_q,
               std::span<const double> mean_p, std::span<const double> var_p,
               std::span<double> d_mean_q = {}, std::span<double> d_var_q = {},
               std::span<double> d_mean_p = {}, std::span<double> d_var_p = {});
double kl_diag(const DiagGaussian& q, const DiagGaussian& p);

struct ReparamSample {
  std::vector<double> z;
  std::vector<double> noise;
};

/// z = mean + sqrt(var) * eps, eps ~ N(0, I).
ReparamSample reparam_sample(const DiagGaussian& g, Rng& rng);
/// dz -> (d mean, d var) for a sample drawn with `noise`.
void reparam_backward(std::span<const double> variance, std::span<const double> noise,
                      std::span<const double> dz, std::span<double> d_mean,
                      std::span<double> d_var);

// ---------------------------------------------------------------- Gumbel-Softmax

struct GumbelSoftmaxSample {
  std::vector<double> soft;    ///< softmax((logits + g) / tau)
  std::vector<double> output;  ///< soft, or one-hot at argmax(soft) when hard
  std::size_t argmax = 0;
};

GumbelSoftmaxSample gumbel_softmax(std::span<const double> logits, double temperature, Rng& rng,
                                   bool hard);
/// Same with caller-supplied Gumbel noise g (one value per logit).
GumbelSoftmaxSample gumbel_softmax(std::span<const double> logits,
                                   std::span<const double> gumbel_noise, double temperature,
                                   bool hard);
/// Gradient with respect to the logits given dL/d(output). In hard mode the
/// one-hot output passes its gradient straight through to the soft sample.
std::vector<double> gumbel_softmax_backward(std::span<const double> soft, double temperature,
                                            std::span<const double> d_output);

// ---------------------------------------------------------------- gradient checking

/// Central differences of `loss` with respect to every entry of `params`.
std::vector<double> finite_difference_gradient(const std::function<double()>& loss,
                                               std::span<double> params, double step = 1e-5);

/// ||a - b|| / max(||a||, ||b||), 0 when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace gmlevel

#endif  // GMLEVEL_NEURALNET_HPP
