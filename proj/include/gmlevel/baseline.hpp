#ifndef GMLEVEL_BASELINE_HPP
#define GMLEVEL_BASELINE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmlevel/corpus.hpp"
#include "gmlevel/gmvae.hpp"
#include "gmlevel/matrix.hpp"
#include "gmlevel/neuralnet.hpp"
#include "gmlevel/random.hpp"

namespace gmlevel {

// ---------------------------------------------------------------- VAE

/// Plain VAE with the GMVAE's encoder/decoder shapes and a N(0, I) prior.
/// config.components and the temperature settings are unused.
struct VaeModel {
  GmvaeConfig config;
  TileVocab vocab;
  GaussianEncoder encoder;  ///< d -> 512 x3 (ReLU) -> 64 / 64
  DenseNet decoder;         ///< 64 -> 512 x3 (ReLU) -> d sigmoid
  TrainingHistory history;
};

VaeModel build_vae(GmvaeConfig config, const TileVocab& vocab);

struct VaeGrads {
  NetGrad trunk, mean_head, var_head, decoder;
  static VaeGrads zeros(const VaeModel& m);
};

/// recon_weight * BCE + kl_weight * KL(q || N(0, I)), mean over the batch,
/// with `normal` as the reparameterization noise (batch x latent).
BatchLosses vae_batch_loss(const VaeModel& model, const Matrix& batch, const Matrix& normal,
                           VaeGrads* grads);

VaeModel train_vae(VaeModel model, const Matrix& data,
                   std::span<const std::optional<std::string>> labels = {},
                   const TrainCallbacks& callbacks = {});

/// Encoder means, one row per input.
Matrix vae_latent_means(const VaeModel& model, const Matrix& data);

// ---------------------------------------------------------------- PCA

struct PcaProjection {
  std::vector<double> mean;
  Matrix axes;  ///< rows are orthonormal principal axes, largest variance first
  std::vector<double> explained_variance;  ///< all axes, non-increasing
  std::size_t retained = 0;                ///< m
  double variance_threshold = 0.95;

  std::size_t input_dim() const { return mean.size(); }
  /// Cumulative explained fraction of the first m axes.
  double retained_fraction() const;
};

/// Covariance eigendecomposition of centred rows; m is the smallest count
/// whose cumulative explained variance reaches `threshold`.
PcaProjection pca_fit(const Matrix& vectors, double threshold = 0.95);
/// Coordinates on the m retained axes.
Matrix pca_project(const PcaProjection& pca, const Matrix& vectors);
/// Back to the original space from retained coordinates.
Matrix pca_reconstruct(const PcaProjection& pca, const Matrix& projected);

// ---------------------------------------------------------------- GMM

struct GmmComponent {
  double weight = 0.0;
  std::vector<double> mean;
  Matrix covariance;  ///< full, ridge-regularized
};

struct GmmModel {
  std::vector<GmmComponent> components;
  /// Per-iteration objective of the kept restart: mean over points of
  /// log sum_k pi_k N(x | mu_k, S_k) exp(-(ridge / 2) tr(S_k^-1)). EM with a
  /// ridge-regularized M-step never decreases it.
  std::vector<double> log_likelihood_trace;
  double log_likelihood = 0.0;  ///< final mean log-likelihood (unpenalized)
  std::uint64_t seed = 0;       ///< seed of the kept restart
  std::size_t iterations = 0;

  std::size_t k() const { return components.size(); }
  std::size_t dim() const { return components.empty() ? 0 : components.front().mean.size(); }
};

struct GmmOptions {
  std::size_t max_iters = 200;
  double tol = 1e-4;
  double ridge = 1e-6;
  std::size_t restarts = 10;
};

/// EM from k-means++ means with a shared sample covariance; the best of
/// `restarts` runs (highest final objective, ties to the lowest seed) is kept.
GmmModel gmm_fit(const Matrix& points, std::size_t k, std::uint64_t seed,
                 const GmmOptions& options = {});

/// Posterior responsibilities, rows sum to 1.
Matrix gmm_responsibilities(const GmmModel& model, const Matrix& points);
std::vector<std::size_t> gmm_predict(const GmmModel& model, const Matrix& points);
/// Mean log-likelihood of points under the mixture.
double gmm_mean_log_likelihood(const GmmModel& model, const Matrix& points);
/// n draws from one component.
Matrix gmm_sample(const GmmModel& model, std::size_t component, std::size_t n, Rng& rng);

// ---------------------------------------------------------------- VAE-GMM

struct VaeGmm {
  VaeModel vae;
  PcaProjection pca;
  GmmModel gmm;
  std::size_t components() const { return gmm.k(); }
};

/// Fits PCA and a k-component GMM on the VAE's latent means of `data`.
VaeGmm fit_vae_gmm(VaeModel vae, const Matrix& data, std::size_t k, std::uint64_t seed,
                   const GmmOptions& options = {});

/// Hard GMM component per input.
std::vector<std::size_t> vae_gmm_predict(const VaeGmm& model, const Matrix& data);

/// Chunks from GMM component i: sample in PCA space, map back to the latent
/// space, decode.
std::vector<Chunk> generate(const VaeGmm& model, std::size_t component, std::size_t n, Rng& rng);

}  // namespace gmlevel

#endif  // GMLEVEL_BASELINE_HPP
