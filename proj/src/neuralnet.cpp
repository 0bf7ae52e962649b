#include "gmlevel/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gmlevel/error.hpp"
#include "gmlevel/kernels.hpp"

namespace gmlevel {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "softplus") return Activation::Softplus;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "linear") return Activation::Linear;
  throw Error(ErrorCode::CheckpointError, "unknown activation '" + std::string(name) + "'");
}

double softplus(double x) {
  // log(1 + e^x) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void apply_activation(Activation act, const Matrix& pre, Matrix& out) {
  out.resize(pre.rows, pre.cols);
  const std::size_t n = pre.size();
  const double* p = pre.data.data();
  double* o = out.data.data();
  switch (act) {
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) o[i] = p[i] > 0.0 ? p[i] : 0.0;
      break;
    case Activation::Softplus:
      for (std::size_t i = 0; i < n; ++i) o[i] = softplus(p[i]);
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) o[i] = sigmoid(p[i]);
      break;
    case Activation::Linear:
      std::copy(p, p + n, o);
      break;
  }
}

// grad_out * act'(pre), in place on `g`.
void activation_backward(Activation act, const Matrix& pre, const Matrix& out, Matrix& g) {
  const std::size_t n = pre.size();
  const double* p = pre.data.data();
  const double* o = out.data.data();
  double* d = g.data.data();
  switch (act) {
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i)
        if (!(p[i] > 0.0)) d[i] = 0.0;
      break;
    case Activation::Softplus:
      for (std::size_t i = 0; i < n; ++i) d[i] *= sigmoid(p[i]);
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) d[i] *= o[i] * (1.0 - o[i]);
      break;
    case Activation::Linear:
      break;
  }
}

}  // namespace

void NetGrad::zero() {
  for (auto& l : layers) {
    l.weight.fill(0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

std::vector<double> NetGrad::flat() const {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].out())
      throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(i) + ": bias length");
    if (i > 0 && layers_[i].in() != layers_[i - 1].out())
      throw Error(ErrorCode::DimensionMismatch,
                  "layer " + std::to_string(i) + " input " + std::to_string(layers_[i].in()) +
                      " does not chain with previous output " + std::to_string(layers_[i - 1].out()));
  }
}

DenseNet DenseNet::make(const std::vector<std::size_t>& sizes,
                        const std::vector<Activation>& activations, Rng& rng) {
  if (sizes.size() < 2 || activations.size() != sizes.size() - 1)
    throw Error(ErrorCode::InvalidConfig, "DenseNet::make: need one activation per layer");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::size_t in = sizes[i], out = sizes[i + 1];
    if (in == 0 || out == 0) throw Error(ErrorCode::InvalidConfig, "DenseNet::make: zero width");
    DenseLayer layer;
    layer.activation = activations[i];
    layer.weight.resize(out, in);
    layer.bias.assign(out, 0.0);
    const double limit = activations[i] == Activation::Relu
                             ? std::sqrt(6.0 / static_cast<double>(in))
                             : std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.data) w = (2.0 * rng.uniform() - 1.0) * limit;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

std::size_t DenseNet::input_size() const { return layers_.empty() ? 0 : layers_.front().in(); }
std::size_t DenseNet::output_size() const { return layers_.empty() ? 0 : layers_.back().out(); }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Matrix DenseNet::forward(const Matrix& x, ForwardCache& cache) const {
  if (x.cols != input_size())
    throw Error(ErrorCode::DimensionMismatch, "forward: input width " + std::to_string(x.cols) +
                                                  ", network expects " +
                                                  std::to_string(input_size()));
  cache.clear();
  cache.inputs.reserve(layers_.size());
  const Matrix* in = &x;
  for (const auto& layer : layers_) {
    cache.inputs.push_back(*in);
    Matrix pre;
    kernels::parallel::matmul_nt(*in, layer.weight, pre);
    for (std::size_t r = 0; r < pre.rows; ++r) {
      auto row = pre.row(r);
      for (std::size_t c = 0; c < pre.cols; ++c) row[c] += layer.bias[c];
    }
    Matrix out;
    apply_activation(layer.activation, pre, out);
    cache.preacts.push_back(std::move(pre));
    cache.outputs.push_back(std::move(out));
    in = &cache.outputs.back();
  }
  return cache.outputs.back();
}

Matrix DenseNet::forward(const Matrix& x) const {
  ForwardCache cache;
  return forward(x, cache);
}

std::vector<double> DenseNet::forward(std::span<const double> x) const {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.data.begin());
  return forward(m).data;
}

Matrix DenseNet::backward(const ForwardCache& cache, const Matrix& grad_out, NetGrad& grads) const {
  if (!cache.valid() || cache.inputs.size() != layers_.size())
    throw Error(ErrorCode::NoCache, "backward called without a matching forward cache");
  Matrix g = grad_out;
  if (!g.same_shape(cache.outputs.back()))
    throw Error(ErrorCode::DimensionMismatch, "backward: upstream gradient shape");
  activation_backward(layers_.back().activation, cache.preacts.back(), cache.outputs.back(), g);
  return backward_from_preact(cache, g, grads);
}

Matrix DenseNet::backward_from_preact(const ForwardCache& cache, const Matrix& grad_preact,
                                      NetGrad& grads) const {
  if (!cache.valid() || cache.inputs.size() != layers_.size())
    throw Error(ErrorCode::NoCache, "backward called without a matching forward cache");
  if (grads.layers.size() != layers_.size())
    throw Error(ErrorCode::ShapeMismatch, "backward: gradient buffer not shaped for this network");
  if (!grad_preact.same_shape(cache.preacts.back()))
    throw Error(ErrorCode::DimensionMismatch, "backward: upstream gradient shape");

  Matrix g = grad_preact;
  Matrix tmp;
  std::vector<double> bias_tmp;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const DenseLayer& layer = layers_[li];
    if (li + 1 != layers_.size())
      activation_backward(layer.activation, cache.preacts[li], cache.outputs[li], g);

    kernels::parallel::matmul_tn(g, cache.inputs[li], tmp);
    auto& gw = grads.layers[li].weight.data;
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += tmp.data[i];

    bias_tmp.assign(layer.out(), 0.0);
    kernels::parallel::column_sums(g, bias_tmp);
    auto& gb = grads.layers[li].bias;
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += bias_tmp[i];

    Matrix next;
    kernels::parallel::matmul_nn(g, layer.weight, next);
    g = std::move(next);
  }
  return g;
}

NetGrad DenseNet::zero_grad() const {
  NetGrad grads;
  grads.layers.reserve(layers_.size());
  for (const auto& l : layers_)
    grads.layers.push_back(LayerGrad{Matrix(l.out(), l.in()), std::vector<double>(l.out(), 0.0)});
  return grads;
}

void DenseNet::for_each_parameter(const std::function<void(double&)>& fn) {
  for (auto& l : layers_) {
    for (double& w : l.weight.data) fn(w);
    for (double& b : l.bias) fn(b);
  }
}

// ---------------------------------------------------------------- Adam

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size())
    throw Error(ErrorCode::ShapeMismatch, "adam_step: " + std::to_string(params.size()) +
                                              " parameters, " + std::to_string(grads.size()) +
                                              " gradients");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "adam_step: moment vectors sized for another model");
  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = state.learning_rate, eps = state.epsilon;
  double* m = state.m.data();
  double* v = state.v.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void adam_step(AdamState& state, DenseNet& net, const NetGrad& grads) {
  if (grads.layers.size() != net.layers().size())
    throw Error(ErrorCode::ShapeMismatch, "adam_step: gradient layers do not match network");
  std::vector<double> params;
  params.reserve(net.parameter_count());
  net.for_each_parameter([&](double& p) { params.push_back(p); });
  const std::vector<double> g = grads.flat();
  adam_step(state, params, g);
  std::size_t i = 0;
  net.for_each_parameter([&](double& p) { p = params[i++]; });
}

// ---------------------------------------------------------------- losses

double bce_loss(std::span<const double> output, std::span<const double> target,
                std::span<double> grad) {
  if (output.size() != target.size() || (!grad.empty() && grad.size() != output.size()))
    throw Error(ErrorCode::LengthMismatch, "bce_loss: " + std::to_string(output.size()) +
                                               " outputs, " + std::to_string(target.size()) +
                                               " targets");
  double loss = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double o = std::clamp(output[i], kProbClamp, 1.0 - kProbClamp);
    const double t = target[i];
    loss -= t * std::log(o) + (1.0 - t) * std::log(1.0 - o);
    if (!grad.empty()) grad[i] = -t / o + (1.0 - t) / (1.0 - o);
  }
  return loss;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t label,
                             std::span<double> grad) {
  if (label >= logits.size())
    throw Error(ErrorCode::IdOutOfRange, "softmax_cross_entropy: label " + std::to_string(label));
  const std::vector<double> p = softmax(logits);
  if (!grad.empty()) {
    if (grad.size() != logits.size())
      throw Error(ErrorCode::LengthMismatch, "softmax_cross_entropy: gradient length");
    for (std::size_t i = 0; i < p.size(); ++i) grad[i] = p[i] - (i == label ? 1.0 : 0.0);
  }
  return -std::log(std::max(p[label], 1e-300));
}

// ---------------------------------------------------------------- Gaussians

double kl_diag(std::span<const double> mean_q, std::span<const double> var_q,
               std::span<const double> mean_p, std::span<const double> var_p,
               std::span<double> d_mean_q, std::span<double> d_var_q, std::span<double> d_mean_p,
               std::span<double> d_var_p) {
  const std::size_t n = mean_q.size();
  if (var_q.size() != n || mean_p.size() != n || var_p.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "kl_diag: operand lengths differ");
  double kl = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double vq = var_q[j], vp = var_p[j];
    if (!(vq > 0.0) || !(vp > 0.0))
      throw Error(ErrorCode::NonPositiveVariance,
                  "kl_diag: variance " + std::to_string(vq > 0.0 ? vp : vq) + " at dim " +
                      std::to_string(j));
    const double diff = mean_q[j] - mean_p[j];
    kl += 0.5 * std::log(vp / vq) + (vq + diff * diff) / (2.0 * vp) - 0.5;
    if (!d_mean_q.empty()) d_mean_q[j] = diff / vp;
    if (!d_mean_p.empty()) d_mean_p[j] = -diff / vp;
    if (!d_var_q.empty()) d_var_q[j] = 0.5 / vp - 0.5 / vq;
    if (!d_var_p.empty()) d_var_p[j] = 0.5 / vp - (vq + diff * diff) / (2.0 * vp * vp);
  }
  return kl;
}

double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  return kl_diag(q.mean, q.variance, p.mean, p.variance);
}

ReparamSample reparam_sample(const DiagGaussian& g, Rng& rng) {
  if (g.mean.size() != g.variance.size())
    throw Error(ErrorCode::DimensionMismatch, "reparam_sample: mean/variance lengths differ");
  ReparamSample s;
  s.z.resize(g.mean.size());
  s.noise.resize(g.mean.size());
  for (std::size_t j = 0; j < g.mean.size(); ++j) {
    if (g.variance[j] < 0.0)
      throw Error(ErrorCode::NonPositiveVariance, "reparam_sample: negative variance");
    s.noise[j] = rng.normal();
    s.z[j] = g.mean[j] + std::sqrt(g.variance[j]) * s.noise[j];
  }
  return s;
}

void reparam_backward(std::span<const double> variance, std::span<const double> noise,
                      std::span<const double> dz, std::span<double> d_mean,
                      std::span<double> d_var) {
  for (std::size_t j = 0; j < dz.size(); ++j) {
    d_mean[j] = dz[j];
    d_var[j] = dz[j] * noise[j] / (2.0 * std::sqrt(variance[j]));
  }
}

// ---------------------------------------------------------------- Gumbel-Softmax

GumbelSoftmaxSample gumbel_softmax(std::span<const double> logits,
                                   std::span<const double> gumbel_noise, double temperature,
                                   bool hard) {
  if (!(temperature > 0.0))
    throw Error(ErrorCode::NonPositiveTemperature,
                "gumbel_softmax: temperature " + std::to_string(temperature));
  if (gumbel_noise.size() != logits.size())
    throw Error(ErrorCode::LengthMismatch, "gumbel_softmax: noise length");
  std::vector<double> perturbed(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    perturbed[i] = (logits[i] + gumbel_noise[i]) / temperature;
  GumbelSoftmaxSample s;
  s.soft = softmax(perturbed);
  s.argmax = static_cast<std::size_t>(std::max_element(s.soft.begin(), s.soft.end()) -
                                      s.soft.begin());
  if (hard) {
    s.output.assign(s.soft.size(), 0.0);
    s.output[s.argmax] = 1.0;
  } else {
    s.output = s.soft;
  }
  return s;
}

GumbelSoftmaxSample gumbel_softmax(std::span<const double> logits, double temperature, Rng& rng,
                                   bool hard) {
  if (!(temperature > 0.0))
    throw Error(ErrorCode::NonPositiveTemperature,
                "gumbel_softmax: temperature " + std::to_string(temperature));
  std::vector<double> noise(logits.size());
  for (double& g : noise) g = rng.gumbel();
  return gumbel_softmax(logits, noise, temperature, hard);
}

std::vector<double> gumbel_softmax_backward(std::span<const double> soft, double temperature,
                                            std::span<const double> d_output) {
  double dot = 0.0;
  for (std::size_t i = 0; i < soft.size(); ++i) dot += soft[i] * d_output[i];
  std::vector<double> d(soft.size());
  for (std::size_t i = 0; i < soft.size(); ++i)
    d[i] = soft[i] * (d_output[i] - dot) / temperature;
  return d;
}

// ---------------------------------------------------------------- gradient checking

std::vector<double> finite_difference_gradient(const std::function<double()>& loss,
                                               std::span<double> params, double step) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = loss();
    params[i] = saved - step;
    const double down = loss();
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "relative_error: lengths");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace gmlevel
