#include "gmlevel/baseline.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gmlevel/error.hpp"
#include "training_loop.hpp"

namespace gmlevel {

namespace {

using EMat = Eigen::MatrixXd;
using EVec = Eigen::VectorXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

RowMajorMap as_eigen(const Matrix& m) {
  return RowMajorMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}

EMat to_eigen(const Matrix& m) { return as_eigen(m); }

Matrix from_eigen(const EMat& e) {
  Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c)
      m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = e(r, c);
  return m;
}

}  // namespace

// ---------------------------------------------------------------- VAE

VaeModel build_vae(GmvaeConfig config, const TileVocab& vocab) {
  const std::size_t d = kChunkCells * vocab.size();
  if (config.input_dim == 0) config.input_dim = d;
  if (config.input_dim != d)
    throw Error(ErrorCode::InvalidConfig, "input dimension " + std::to_string(config.input_dim) +
                                              " does not match 256 * " + std::to_string(vocab.size()));
  config.validate(false);
  const std::size_t z = config.latent_dim, w = config.hidden_width, depth = config.hidden_depth;
  Rng rng(config.seed);
  VaeModel m;
  m.config = config;
  m.vocab = vocab;
  std::vector<std::size_t> trunk{d}, dec{z};
  for (std::size_t i = 0; i < depth; ++i) {
    trunk.push_back(w);
    dec.push_back(w);
  }
  dec.push_back(d);
  std::vector<Activation> relu(depth, Activation::Relu), dec_acts = relu;
  dec_acts.push_back(Activation::Sigmoid);
  m.encoder.trunk = DenseNet::make(trunk, relu, rng);
  m.encoder.mean_head = DenseNet::make({w, z}, {Activation::Linear}, rng);
  m.encoder.var_head = DenseNet::make({w, z}, {Activation::Softplus}, rng);
  m.decoder = DenseNet::make(dec, dec_acts, rng);
  return m;
}

VaeGrads VaeGrads::zeros(const VaeModel& m) {
  return {m.encoder.trunk.zero_grad(), m.encoder.mean_head.zero_grad(),
          m.encoder.var_head.zero_grad(), m.decoder.zero_grad()};
}

BatchLosses vae_batch_loss(const VaeModel& model, const Matrix& batch, const Matrix& normal,
                           VaeGrads* grads) {
  const auto& cfg = model.config;
  const std::size_t n = batch.rows, zdim = cfg.latent_dim;
  if (batch.cols != cfg.input_dim)
    throw Error(ErrorCode::DimensionMismatch, "batch width " + std::to_string(batch.cols));
  if (n == 0 || normal.rows != n || normal.cols != zdim)
    throw Error(ErrorCode::DimensionMismatch, "batch noise shape");

  GaussianEncoder::Cache enc_cache;
  const auto [mean_q, var_q] = model.encoder.forward(batch, enc_cache);
  Matrix z(n, zdim);
  for (std::size_t i = 0; i < z.data.size(); ++i)
    z.data[i] = mean_q.data[i] + std::sqrt(var_q.data[i]) * normal.data[i];
  ForwardCache dec_cache;
  const Matrix recon = model.decoder.forward(z, dec_cache);

  const std::vector<double> zeros(zdim, 0.0), ones(zdim, 1.0);
  Matrix d_mean(n, zdim), d_var(n, zdim);
  BatchLosses out;
  for (std::size_t i = 0; i < n; ++i) {
    out.recon += bce_loss(recon.row(i), batch.row(i));
    out.kl += grads ? kl_diag(mean_q.row(i), var_q.row(i), zeros, ones, d_mean.row(i), d_var.row(i))
                    : kl_diag(mean_q.row(i), var_q.row(i), zeros, ones);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.recon *= inv_n;
  out.kl *= inv_n;
  out.total = cfg.recon_weight * out.recon + cfg.kl_weight * out.kl;
  if (!grads) return out;

  Matrix d_logit(n, cfg.input_dim);
  const double wr = cfg.recon_weight * inv_n;
  for (std::size_t i = 0; i < d_logit.data.size(); ++i)
    d_logit.data[i] = wr * (recon.data[i] - batch.data[i]);
  const Matrix dz = model.decoder.backward_from_preact(dec_cache, d_logit, grads->decoder);
  const double wk = cfg.kl_weight * inv_n;
  for (std::size_t i = 0; i < dz.data.size(); ++i) {
    d_mean.data[i] = dz.data[i] + wk * d_mean.data[i];
    d_var.data[i] = dz.data[i] * normal.data[i] / (2.0 * std::sqrt(var_q.data[i])) + wk * d_var.data[i];
  }
  model.encoder.backward(enc_cache, d_mean, d_var, grads->trunk, grads->mean_head, grads->var_head);
  return out;
}

VaeModel train_vae(VaeModel model, const Matrix& data,
                   std::span<const std::optional<std::string>> labels,
                   const TrainCallbacks& callbacks) {
  const GmvaeConfig cfg = model.config;
  if (cfg.epochs == 0) return model;
  Rng rng(cfg.seed ^ 0x5DEECE66DULL);
  AdamState trunk, mean_head, var_head, decoder;
  for (AdamState* s : {&trunk, &mean_head, &var_head, &decoder}) s->learning_rate = cfg.learning_rate;

  detail::run_epochs(
      cfg, data, labels, rng, model.history, callbacks,
      [&](const Matrix& batch, long) {
        Matrix normal(batch.rows, cfg.latent_dim);
        for (double& e : normal.data) e = rng.normal();
        VaeGrads g = VaeGrads::zeros(model);
        const BatchLosses l = vae_batch_loss(model, batch, normal, &g);
        detail::check_finite(l, "train_vae");
        adam_step(trunk, model.encoder.trunk, g.trunk);
        adam_step(mean_head, model.encoder.mean_head, g.mean_head);
        adam_step(var_head, model.encoder.var_head, g.var_head);
        adam_step(decoder, model.decoder, g.decoder);
        return l;
      },
      [](long) {});
  return model;
}

Matrix vae_latent_means(const VaeModel& model, const Matrix& data) {
  if (data.cols != model.config.input_dim)
    throw Error(ErrorCode::DimensionMismatch, "vae_latent_means: data width " + std::to_string(data.cols));
  Matrix out(data.rows, model.config.latent_dim);
  const std::size_t bs = 256;
  for (std::size_t lo = 0; lo < data.rows; lo += bs) {
    const std::size_t hi = std::min(data.rows, lo + bs);
    Matrix batch(hi - lo, data.cols);
    std::copy(data.data.begin() + static_cast<long>(lo * data.cols),
              data.data.begin() + static_cast<long>(hi * data.cols), batch.data.begin());
    GaussianEncoder::Cache cache;
    const auto [mean, var] = model.encoder.forward(batch, cache);
    std::copy(mean.data.begin(), mean.data.end(), out.data.begin() + static_cast<long>(lo * out.cols));
  }
  return out;
}

// ---------------------------------------------------------------- PCA

double PcaProjection::retained_fraction() const {
  double total = 0.0, kept = 0.0;
  for (std::size_t i = 0; i < explained_variance.size(); ++i) {
    total += explained_variance[i];
    if (i < retained) kept += explained_variance[i];
  }
  return total > 0.0 ? kept / total : 0.0;
}

PcaProjection pca_fit(const Matrix& vectors, double threshold) {
  if (vectors.rows < 2)
    throw Error(ErrorCode::DegenerateData, "PCA needs at least two vectors, got " + std::to_string(vectors.rows));
  if (!(threshold > 0.0) || threshold > 1.0)
    throw Error(ErrorCode::InvalidConfig, "PCA variance threshold must be in (0, 1]");
  const EMat x = to_eigen(vectors);
  const EVec mean = x.colwise().mean();
  const EMat centred = x.rowwise() - mean.transpose();
  const EMat cov = (centred.transpose() * centred) / static_cast<double>(vectors.rows - 1);

  Eigen::SelfAdjointEigenSolver<EMat> solver(cov);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorCode::DegenerateData, "PCA eigendecomposition failed");
  const EVec values = solver.eigenvalues();   // ascending
  const EMat vecs = solver.eigenvectors();

  const auto dim = static_cast<std::size_t>(cov.rows());
  PcaProjection p;
  p.variance_threshold = threshold;
  p.mean.assign(mean.data(), mean.data() + mean.size());
  p.axes.resize(dim, dim);
  p.explained_variance.resize(dim);
  double total = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const auto src = static_cast<Eigen::Index>(dim - 1 - i);
    p.explained_variance[i] = std::max(0.0, values(src));
    total += p.explained_variance[i];
    EVec axis = vecs.col(src);
    // sign: largest-magnitude entry positive
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0.0) axis = -axis;
    for (std::size_t j = 0; j < dim; ++j) p.axes(i, j) = axis(static_cast<Eigen::Index>(j));
  }
  if (!(total > 0.0)) throw Error(ErrorCode::DegenerateData, "PCA input has zero variance");

  double cumulative = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    cumulative += p.explained_variance[i];
    p.retained = i + 1;
    if (cumulative / total >= threshold) break;
  }
  return p;
}

Matrix pca_project(const PcaProjection& pca, const Matrix& vectors) {
  if (vectors.cols != pca.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "pca_project: width " + std::to_string(vectors.cols));
  Matrix out(vectors.rows, pca.retained);
  for (std::size_t r = 0; r < vectors.rows; ++r)
    for (std::size_t a = 0; a < pca.retained; ++a) {
      double s = 0.0;
      for (std::size_t j = 0; j < vectors.cols; ++j) s += (vectors(r, j) - pca.mean[j]) * pca.axes(a, j);
      out(r, a) = s;
    }
  return out;
}

Matrix pca_reconstruct(const PcaProjection& pca, const Matrix& projected) {
  if (projected.cols != pca.retained)
    throw Error(ErrorCode::DimensionMismatch, "pca_reconstruct: width " + std::to_string(projected.cols));
  Matrix out(projected.rows, pca.input_dim());
  for (std::size_t r = 0; r < projected.rows; ++r)
    for (std::size_t j = 0; j < pca.input_dim(); ++j) {
      double s = pca.mean[j];
      for (std::size_t a = 0; a < pca.retained; ++a) s += projected(r, a) * pca.axes(a, j);
      out(r, j) = s;
    }
  return out;
}

// ---------------------------------------------------------------- GMM

namespace {

struct Factored {
  Eigen::LLT<EMat> llt;
  double log_det = 0.0;
  double trace_inv = 0.0;
};

Factored factor(const EMat& cov, std::size_t component) {
  Factored f;
  f.llt.compute(cov);
  if (f.llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularCovariance,
                "covariance of component " + std::to_string(component) + " is not positive definite");
  const EMat& l = f.llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) f.log_det += 2.0 * std::log(l(i, i));
  f.trace_inv = f.llt.solve(EMat::Identity(cov.rows(), cov.cols())).trace();
  return f;
}

struct EmState {
  std::vector<double> weight;
  std::vector<EVec> mean;
  std::vector<EMat> cov;
};

// log pi_k + log N(x | mu_k, S_k) [- ridge/2 tr S_k^-1], rows = points.
EMat component_log_densities(const EMat& x, const EmState& s, double ridge_penalty) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const auto k = s.weight.size();
  EMat out(n, static_cast<Eigen::Index>(k));
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t c = 0; c < k; ++c) {
    const Factored f = factor(s.cov[c], c);
    const double log_w = s.weight[c] > 0.0 ? std::log(s.weight[c]) : -std::numeric_limits<double>::infinity();
    const EMat diff = (x.rowwise() - s.mean[c].transpose()).transpose();  // d x n
    const EMat solved = f.llt.matrixL().solve(diff);
    const EVec maha = solved.colwise().squaredNorm().transpose();
    const double constant =
        log_w - 0.5 * (static_cast<double>(d) * log2pi + f.log_det) - 0.5 * ridge_penalty * f.trace_inv;
    out.col(static_cast<Eigen::Index>(c)) = (-0.5 * maha).array() + constant;
  }
  return out;
}

// Row-wise log-sum-exp; returns per-row totals and turns `logp` into
// normalized responsibilities.
EVec normalize_rows(EMat& logp) {
  EVec totals(logp.rows());
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double mx = logp.row(i).maxCoeff();
    double s = 0.0;
    for (Eigen::Index c = 0; c < logp.cols(); ++c) s += std::exp(logp(i, c) - mx);
    totals(i) = mx + std::log(s);
    for (Eigen::Index c = 0; c < logp.cols(); ++c) logp(i, c) = std::exp(logp(i, c) - totals(i));
  }
  return totals;
}

std::vector<EVec> kmeans_pp(const EMat& x, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<EVec> centres;
  centres.push_back(x.row(static_cast<Eigen::Index>(rng.index(n))).transpose());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centres.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)).transpose() - centres.back()).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = rng.index(n);
    }
    centres.push_back(x.row(static_cast<Eigen::Index>(pick)).transpose());
  }
  return centres;
}

GmmModel em_single(const EMat& x, std::size_t k, std::uint64_t seed, const GmmOptions& o) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Rng rng(seed);
  EmState s;
  s.mean = kmeans_pp(x, k, rng);
  const EVec mu = x.colwise().mean();
  const EMat centred = x.rowwise() - mu.transpose();
  const EMat shared = (centred.transpose() * centred) / static_cast<double>(n) +
                      o.ridge * EMat::Identity(d, d);
  s.cov.assign(k, shared);
  s.weight.assign(k, 1.0 / static_cast<double>(k));

  GmmModel model;
  model.seed = seed;
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < o.max_iters; ++it) {
    EMat resp = component_log_densities(x, s, o.ridge);
    const double objective = normalize_rows(resp).mean();
    assert(objective >= previous - 1e-9 * (1.0 + std::abs(previous)));
    model.log_likelihood_trace.push_back(objective);
    model.iterations = it + 1;
    if (it > 0 && objective - previous < o.tol) break;
    previous = objective;

    // M-step
    for (std::size_t c = 0; c < k; ++c) {
      const EVec r = resp.col(static_cast<Eigen::Index>(c));
      const double nk = r.sum();
      s.weight[c] = nk / static_cast<double>(n);
      if (nk < 1e-10) continue;  // empty component keeps its last parameters
      s.mean[c] = (x.transpose() * r) / nk;
      const EMat diff = x.rowwise() - s.mean[c].transpose();
      s.cov[c] = (diff.transpose() * r.asDiagonal() * diff) / nk + o.ridge * EMat::Identity(d, d);
    }
  }

  for (std::size_t c = 0; c < k; ++c) {
    GmmComponent comp;
    comp.weight = s.weight[c];
    comp.mean.assign(s.mean[c].data(), s.mean[c].data() + d);
    comp.covariance = from_eigen(s.cov[c]);
    model.components.push_back(std::move(comp));
  }
  return model;
}

EmState state_of(const GmmModel& m) {
  EmState s;
  for (const auto& c : m.components) {
    s.weight.push_back(c.weight);
    s.mean.push_back(Eigen::Map<const EVec>(c.mean.data(), static_cast<Eigen::Index>(c.mean.size())));
    s.cov.push_back(to_eigen(c.covariance));
  }
  return s;
}

}  // namespace

GmmModel gmm_fit(const Matrix& points, std::size_t k, std::uint64_t seed, const GmmOptions& options) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "GMM needs at least one component");
  if (points.rows < k)
    throw Error(ErrorCode::InvalidConfig, "GMM with " + std::to_string(k) + " components needs at least " +
                                              std::to_string(k) + " points, got " + std::to_string(points.rows));
  if (points.cols == 0) throw Error(ErrorCode::DimensionMismatch, "GMM points have no dimensions");
  const EMat x = to_eigen(points);
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  std::vector<GmmModel> fits(restarts);
  std::vector<std::string> failures(restarts);

#pragma omp parallel for schedule(dynamic)
  for (long r = 0; r < static_cast<long>(restarts); ++r) {
    try {
      fits[static_cast<std::size_t>(r)] = em_single(x, k, seed + static_cast<std::uint64_t>(r), options);
    } catch (const Error& e) {
      failures[static_cast<std::size_t>(r)] = e.what();
    }
  }
  for (const auto& f : failures)
    if (!f.empty()) throw Error(ErrorCode::SingularCovariance, f);

  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (fits[r].log_likelihood_trace.back() > fits[best].log_likelihood_trace.back()) best = r;
  GmmModel model = std::move(fits[best]);
  model.log_likelihood = gmm_mean_log_likelihood(model, points);
  return model;
}

Matrix gmm_responsibilities(const GmmModel& model, const Matrix& points) {
  if (points.cols != model.dim())
    throw Error(ErrorCode::DimensionMismatch, "GMM expects " + std::to_string(model.dim()) +
                                                  "-dimensional points, got " + std::to_string(points.cols));
  EMat logp = component_log_densities(to_eigen(points), state_of(model), 0.0);
  normalize_rows(logp);
  return from_eigen(logp);
}

std::vector<std::size_t> gmm_predict(const GmmModel& model, const Matrix& points) {
  const Matrix r = gmm_responsibilities(model, points);
  std::vector<std::size_t> out(r.rows);
  for (std::size_t i = 0; i < r.rows; ++i) {
    const auto row = r.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double gmm_mean_log_likelihood(const GmmModel& model, const Matrix& points) {
  if (points.cols != model.dim())
    throw Error(ErrorCode::DimensionMismatch, "GMM point dimension mismatch");
  EMat logp = component_log_densities(to_eigen(points), state_of(model), 0.0);
  return normalize_rows(logp).mean();
}

Matrix gmm_sample(const GmmModel& model, std::size_t component, std::size_t n, Rng& rng) {
  if (component >= model.k())
    throw Error(ErrorCode::ComponentOutOfRange, "GMM component " + std::to_string(component) +
                                                    " outside [0, " + std::to_string(model.k()) + ")");
  const auto& c = model.components[component];
  const Factored f = factor(to_eigen(c.covariance), component);
  const EMat l = f.llt.matrixL();
  const auto d = static_cast<Eigen::Index>(model.dim());
  Matrix out(n, model.dim());
  EVec eps(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) eps(j) = rng.normal();
    const EVec x = l * eps;
    for (Eigen::Index j = 0; j < d; ++j)
      out(i, static_cast<std::size_t>(j)) = c.mean[static_cast<std::size_t>(j)] + x(j);
  }
  return out;
}

// ---------------------------------------------------------------- VAE-GMM

VaeGmm fit_vae_gmm(VaeModel vae, const Matrix& data, std::size_t k, std::uint64_t seed,
                   const GmmOptions& options) {
  VaeGmm out;
  const Matrix latents = vae_latent_means(vae, data);
  out.pca = pca_fit(latents, 0.95);
  out.gmm = gmm_fit(pca_project(out.pca, latents), k, seed, options);
  out.vae = std::move(vae);
  return out;
}

std::vector<std::size_t> vae_gmm_predict(const VaeGmm& model, const Matrix& data) {
  return gmm_predict(model.gmm, pca_project(model.pca, vae_latent_means(model.vae, data)));
}

std::vector<Chunk> generate(const VaeGmm& model, std::size_t component, std::size_t n, Rng& rng) {
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "generate: n must be at least 1");
  const Matrix projected = gmm_sample(model.gmm, component, n, rng);
  return decode_latents(model.vae.decoder, pca_reconstruct(model.pca, projected), model.vae.vocab);
}

}  // namespace gmlevel
