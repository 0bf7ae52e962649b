#ifndef GMLEVEL_GMVAE_HPP
#define GMLEVEL_GMVAE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmlevel/corpus.hpp"
#include "gmlevel/matrix.hpp"
#include "gmlevel/neuralnet.hpp"
#include "gmlevel/random.hpp"

namespace gmlevel {

/// Added to every softplus variance head so variances stay strictly positive
/// even where softplus underflows.
inline constexpr double kVarianceFloor = 1e-10;

enum class SamplerKind { Uniform, Balanced };

std::string_view sampler_name(SamplerKind s);
SamplerKind parse_sampler(std::string_view name);

/// Gumbel-Softmax temperature over training. tau decays exponentially from
/// `start` towards `min`, reaching it at `hard_from` epochs; from then on the
/// label layer emits straight-through one-hot samples at `min`.
struct TemperatureSchedule {
  double start = 1.0;
  double min = 0.5;
  /// Per-epoch decay rate; 0 derives it from start, min and hard_from.
  double decay = 0.0;
  /// First hard epoch; negative means half of the run.
  long hard_from = -1;

  long hard_epoch(long total_epochs) const;
  double temperature(long epoch, long total_epochs) const;
  bool hard(long epoch, long total_epochs) const;
};

struct GmvaeConfig {
  std::size_t input_dim = 0;  ///< d = 256 * T
  std::size_t components = 10;
  std::size_t latent_dim = 64;
  std::size_t hidden_width = 512;
  std::size_t hidden_depth = 3;
  std::size_t batch_size = 64;
  long epochs = 10000;
  double learning_rate = 1e-3;
  double kl_weight = 2.0;
  double recon_weight = 1.0;
  TemperatureSchedule temperature;
  std::uint64_t seed = 42;
  long checkpoint_every = 0;
  SamplerKind sampler = SamplerKind::Uniform;

  /// Throws InvalidConfig. `need_components` is false for the plain VAE.
  void validate(bool need_components = true) const;
};

struct EpochRecord {
  long epoch = 0;
  double recon_loss = 0.0;  ///< mean per chunk
  double kl_loss = 0.0;     ///< mean per chunk, unweighted
  double total_loss = 0.0;  ///< recon_weight * recon + kl_weight * kl
  double temperature = 0.0;
  bool hard = false;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  bool operator==(const TrainingHistory& o) const;
};

/// Trunk plus mean and variance heads; maps a batch to q(z | input).
struct GaussianEncoder {
  DenseNet trunk;
  DenseNet mean_head;
  DenseNet var_head;

  struct Cache {
    ForwardCache trunk, mean, var;
  };

  /// Returns (means, variances) with variances floored at kVarianceFloor.
  std::pair<Matrix, Matrix> forward(const Matrix& input, Cache& cache) const;
  /// Returns the gradient with respect to the input batch.
  Matrix backward(const Cache& cache, const Matrix& d_mean, const Matrix& d_var, NetGrad& g_trunk,
                  NetGrad& g_mean, NetGrad& g_var) const;
  bool operator==(const GaussianEncoder&) const = default;
};

struct GmvaeModel {
  GmvaeConfig config;
  TileVocab vocab;
  DenseNet label_net;       ///< d -> 512 x3 (ReLU) -> k logits
  DenseNet prior_mean_net;  ///< k -> 64 linear
  DenseNet prior_var_net;   ///< k -> 64 softplus
  GaussianEncoder encoder;  ///< (d + k) -> 512 x3 (ReLU) -> 64 / 64
  DenseNet decoder;         ///< 64 -> 512 x3 (ReLU) -> d sigmoid
  TrainingHistory history;

  std::size_t components() const { return config.components; }
  std::size_t input_dim() const { return config.input_dim; }
};

/// Builds a fresh model. config.input_dim is set from the vocabulary when 0
/// and must equal 256 * T otherwise.
GmvaeModel build_model(GmvaeConfig config, const TileVocab& vocab);

/// Label for one input: Gumbel-Softmax over the label network's logits.
std::vector<double> assign_label(const GmvaeModel& model, std::span<const double> x,
                                 double temperature, Rng& rng, bool hard);

/// Noise for one batch, fixed up front so a loss evaluation can be repeated.
struct BatchNoise {
  Matrix gumbel;  ///< batch x k
  Matrix normal;  ///< batch x latent
  static BatchNoise draw(std::size_t batch, std::size_t k, std::size_t latent, Rng& rng);
};

struct GmvaeGrads {
  NetGrad label, prior_mean, prior_var, trunk, mean_head, var_head, decoder;
  static GmvaeGrads zeros(const GmvaeModel& m);
};

struct BatchLosses {
  double recon = 0.0;  ///< mean per item
  double kl = 0.0;     ///< mean per item
  double total = 0.0;  ///< recon_weight * recon + kl_weight * kl
};

/// Loss of one batch under fixed noise. When `grads` is given it receives the
/// gradient of `total` with respect to every parameter of all networks.
BatchLosses gmvae_batch_loss(const GmvaeModel& model, const Matrix& batch, double temperature,
                             bool hard, const BatchNoise& noise, GmvaeGrads* grads);

/// One Adam state per network, shared hyperparameters.
struct GmvaeOptimizer {
  AdamState label, prior_mean, prior_var, trunk, mean_head, var_head, decoder;
  explicit GmvaeOptimizer(double learning_rate = 1e-3);
};

/// Forward, backward and one Adam step per network. Throws NonFiniteLoss.
BatchLosses training_step(GmvaeModel& model, const Matrix& batch, double temperature, bool hard,
                          GmvaeOptimizer& optimizer, Rng& rng);

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Every config.checkpoint_every epochs, if positive.
  std::function<void(long epoch, const GmvaeModel&)> on_checkpoint;
};

/// Runs config.epochs epochs of ceil(N / batch) batches each. With the
/// balanced sampler, batches are drawn by level type using `labels`.
GmvaeModel train(GmvaeModel model, const Matrix& data,
                 std::span<const std::optional<std::string>> labels = {},
                 const TrainCallbacks& callbacks = {});

/// Component i's Gaussian: the one-hot label e_i through the prior networks.
std::vector<DiagGaussian> component_params(const GmvaeModel& model);
/// Prior-network output for an arbitrary (soft) label.
DiagGaussian prior_for_label(const GmvaeModel& model, std::span<const double> label);

/// n chunks from component `component`: latent samples through the decoder,
/// argmax per cell.
std::vector<Chunk> generate(const GmvaeModel& model, std::size_t component, std::size_t n, Rng& rng);

struct EncodedChunk {
  std::vector<double> latent_mean;
  std::size_t label = 0;
};

/// Deterministic encoding: label = argmax of the label logits (no Gumbel
/// noise), latent = encoder mean given that one-hot label.
std::vector<EncodedChunk> encode_dataset(const GmvaeModel& model, const Matrix& data);

/// Decodes latent rows to chunks (argmax per cell).
std::vector<Chunk> decode_latents(const DenseNet& decoder, const Matrix& latents,
                                  const TileVocab& vocab);

/// Fraction of cells whose argmax reconstruction matches the input, with the
/// latent set to the encoder mean.
double reconstruction_accuracy(const GmvaeModel& model, const Matrix& data);

}  // namespace gmlevel

#endif  // GMLEVEL_GMVAE_HPP
