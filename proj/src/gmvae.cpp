#include "gmlevel/gmvae.hpp"

#include <algorithm>
#include <cmath>

#include "gmlevel/error.hpp"
#include "training_loop.hpp"

namespace gmlevel {

std::string_view sampler_name(SamplerKind s) {
  return s == SamplerKind::Balanced ? "balanced" : "uniform";
}

SamplerKind parse_sampler(std::string_view name) {
  if (name == "uniform") return SamplerKind::Uniform;
  if (name == "balanced") return SamplerKind::Balanced;
  throw Error(ErrorCode::InvalidConfig, "unknown sampler '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- schedule

long TemperatureSchedule::hard_epoch(long total_epochs) const {
  return hard_from >= 0 ? hard_from : total_epochs / 2;
}

double TemperatureSchedule::temperature(long epoch, long total_epochs) const {
  const long h = hard_epoch(total_epochs);
  if (epoch >= h) return min;
  double rate = decay;
  if (rate <= 0.0) rate = h > 0 ? std::log(start / min) / static_cast<double>(h) : 0.0;
  return std::max(min, start * std::exp(-rate * static_cast<double>(epoch)));
}

bool TemperatureSchedule::hard(long epoch, long total_epochs) const {
  return epoch >= hard_epoch(total_epochs);
}

void GmvaeConfig::validate(bool need_components) const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (need_components && components < 2) fail("k must be at least 2, got " + std::to_string(components));
  if (input_dim == 0 || input_dim % kChunkCells != 0)
    fail("input dimension " + std::to_string(input_dim) + " is not 256 * T");
  if (latent_dim == 0 || hidden_width == 0 || hidden_depth == 0) fail("network sizes must be positive");
  if (batch_size == 0) fail("batch size must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (!(learning_rate > 0.0)) fail("learning rate must be positive");
  if (!(kl_weight >= 0.0) || !(recon_weight >= 0.0)) fail("loss weights must be non-negative");
  if (!(temperature.start > 0.0) || !(temperature.min > 0.0))
    fail("temperatures must be positive");
  if (temperature.min > temperature.start) fail("minimum temperature exceeds the start temperature");
}

bool TrainingHistory::operator==(const TrainingHistory& o) const {
  if (epochs.size() != o.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto &a = epochs[i], &b = o.epochs[i];
    if (a.epoch != b.epoch || a.recon_loss != b.recon_loss || a.kl_loss != b.kl_loss ||
        a.total_loss != b.total_loss || a.temperature != b.temperature || a.hard != b.hard)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------- encoder

std::pair<Matrix, Matrix> GaussianEncoder::forward(const Matrix& input, Cache& cache) const {
  const Matrix h = trunk.forward(input, cache.trunk);
  Matrix mean = mean_head.forward(h, cache.mean);
  Matrix var = var_head.forward(h, cache.var);
  for (double& v : var.data) v += kVarianceFloor;
  return {std::move(mean), std::move(var)};
}

Matrix GaussianEncoder::backward(const Cache& cache, const Matrix& d_mean, const Matrix& d_var,
                                 NetGrad& g_trunk, NetGrad& g_mean, NetGrad& g_var) const {
  Matrix dh = mean_head.backward(cache.mean, d_mean, g_mean);
  const Matrix dh_var = var_head.backward(cache.var, d_var, g_var);
  for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dh_var.data[i];
  return trunk.backward(cache.trunk, dh, g_trunk);
}

// ---------------------------------------------------------------- construction

namespace {

std::vector<std::size_t> mlp_sizes(std::size_t in, std::size_t width, std::size_t depth,
                                   std::size_t out = 0) {
  std::vector<std::size_t> sizes{in};
  for (std::size_t i = 0; i < depth; ++i) sizes.push_back(width);
  if (out) sizes.push_back(out);
  return sizes;
}

std::vector<Activation> relus(std::size_t depth, std::optional<Activation> last = std::nullopt) {
  std::vector<Activation> acts(depth, Activation::Relu);
  if (last) acts.push_back(*last);
  return acts;
}

Matrix concat_columns(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<long>(a.cols));
  }
  return out;
}

Matrix one_hot_rows(std::span<const std::size_t> labels, std::size_t k) {
  Matrix m(labels.size(), k);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, labels[i]) = 1.0;
  return m;
}

}  // namespace

GmvaeModel build_model(GmvaeConfig config, const TileVocab& vocab) {
  const std::size_t d = kChunkCells * vocab.size();
  if (config.input_dim == 0) config.input_dim = d;
  if (config.input_dim != d)
    throw Error(ErrorCode::InvalidConfig, "input dimension " + std::to_string(config.input_dim) +
                                              " does not match 256 * " +
                                              std::to_string(vocab.size()));
  config.validate(true);

  const std::size_t k = config.components, z = config.latent_dim;
  const std::size_t w = config.hidden_width, depth = config.hidden_depth;
  Rng rng(config.seed);
  GmvaeModel m;
  m.config = config;
  m.vocab = vocab;
  m.label_net = DenseNet::make(mlp_sizes(d, w, depth, k), relus(depth, Activation::Linear), rng);
  m.prior_mean_net = DenseNet::make({k, z}, {Activation::Linear}, rng);
  m.prior_var_net = DenseNet::make({k, z}, {Activation::Softplus}, rng);
  m.encoder.trunk = DenseNet::make(mlp_sizes(d + k, w, depth), relus(depth), rng);
  m.encoder.mean_head = DenseNet::make({w, z}, {Activation::Linear}, rng);
  m.encoder.var_head = DenseNet::make({w, z}, {Activation::Softplus}, rng);
  m.decoder = DenseNet::make(mlp_sizes(z, w, depth, d), relus(depth, Activation::Sigmoid), rng);
  return m;
}

std::vector<double> assign_label(const GmvaeModel& model, std::span<const double> x,
                                 double temperature, Rng& rng, bool hard) {
  if (x.size() != model.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "assign_label: input length " +
                                                  std::to_string(x.size()) + ", model expects " +
                                                  std::to_string(model.input_dim()));
  const std::vector<double> logits = model.label_net.forward(x);
  return gumbel_softmax(logits, temperature, rng, hard).output;
}

// ---------------------------------------------------------------- loss

BatchNoise BatchNoise::draw(std::size_t batch, std::size_t k, std::size_t latent, Rng& rng) {
  BatchNoise n{Matrix(batch, k), Matrix(batch, latent)};
  for (double& g : n.gumbel.data) g = rng.gumbel();
  for (double& e : n.normal.data) e = rng.normal();
  return n;
}

GmvaeGrads GmvaeGrads::zeros(const GmvaeModel& m) {
  return {m.label_net.zero_grad(),     m.prior_mean_net.zero_grad(),
          m.prior_var_net.zero_grad(), m.encoder.trunk.zero_grad(),
          m.encoder.mean_head.zero_grad(), m.encoder.var_head.zero_grad(),
          m.decoder.zero_grad()};
}

BatchLosses gmvae_batch_loss(const GmvaeModel& model, const Matrix& batch, double temperature,
                             bool hard, const BatchNoise& noise, GmvaeGrads* grads) {
  const auto& cfg = model.config;
  const std::size_t n = batch.rows, k = cfg.components, zdim = cfg.latent_dim;
  if (batch.cols != cfg.input_dim)
    throw Error(ErrorCode::DimensionMismatch, "batch width " + std::to_string(batch.cols) +
                                                  ", model expects " +
                                                  std::to_string(cfg.input_dim));
  if (n == 0) throw Error(ErrorCode::DimensionMismatch, "empty batch");
  if (noise.gumbel.rows != n || noise.gumbel.cols != k || noise.normal.rows != n ||
      noise.normal.cols != zdim)
    throw Error(ErrorCode::DimensionMismatch, "batch noise shape");

  // label assignment
  ForwardCache label_cache;
  const Matrix logits = model.label_net.forward(batch, label_cache);
  Matrix labels(n, k), soft(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = gumbel_softmax(logits.row(i), noise.gumbel.row(i), temperature, hard);
    std::copy(s.output.begin(), s.output.end(), labels.row(i).begin());
    std::copy(s.soft.begin(), s.soft.end(), soft.row(i).begin());
  }

  // q(z | x, y) and the label's component p_y(z)
  GaussianEncoder::Cache enc_cache;
  const auto [mean_q, var_q] = model.encoder.forward(concat_columns(batch, labels), enc_cache);
  ForwardCache pm_cache, pv_cache;
  const Matrix mean_p = model.prior_mean_net.forward(labels, pm_cache);
  Matrix var_p = model.prior_var_net.forward(labels, pv_cache);
  for (double& v : var_p.data) v += kVarianceFloor;

  Matrix z(n, zdim);
  for (std::size_t i = 0; i < z.data.size(); ++i)
    z.data[i] = mean_q.data[i] + std::sqrt(var_q.data[i]) * noise.normal.data[i];

  ForwardCache dec_cache;
  const Matrix recon = model.decoder.forward(z, dec_cache);

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix d_mean_q(n, zdim), d_var_q(n, zdim), d_mean_p(n, zdim), d_var_p(n, zdim);
  BatchLosses out;
  for (std::size_t i = 0; i < n; ++i) {
    out.recon += bce_loss(recon.row(i), batch.row(i));
    if (grads)
      out.kl += kl_diag(mean_q.row(i), var_q.row(i), mean_p.row(i), var_p.row(i), d_mean_q.row(i),
                        d_var_q.row(i), d_mean_p.row(i), d_var_p.row(i));
    else
      out.kl += kl_diag(mean_q.row(i), var_q.row(i), mean_p.row(i), var_p.row(i));
  }
  out.recon *= inv_n;
  out.kl *= inv_n;
  out.total = cfg.recon_weight * out.recon + cfg.kl_weight * out.kl;
  if (!grads) return out;

  // decoder: sigmoid + cross-entropy fused at the logit
  Matrix d_logit(n, cfg.input_dim);
  const double wr = cfg.recon_weight * inv_n;
  for (std::size_t i = 0; i < d_logit.data.size(); ++i)
    d_logit.data[i] = wr * (recon.data[i] - batch.data[i]);
  const Matrix dz = model.decoder.backward_from_preact(dec_cache, d_logit, grads->decoder);

  const double wk = cfg.kl_weight * inv_n;
  for (std::size_t i = 0; i < dz.data.size(); ++i) {
    const double sd = std::sqrt(var_q.data[i]);
    d_mean_q.data[i] = dz.data[i] + wk * d_mean_q.data[i];
    d_var_q.data[i] = dz.data[i] * noise.normal.data[i] / (2.0 * sd) + wk * d_var_q.data[i];
    d_mean_p.data[i] *= wk;
    d_var_p.data[i] *= wk;
  }

  const Matrix d_enc_in = model.encoder.backward(enc_cache, d_mean_q, d_var_q, grads->trunk,
                                                 grads->mean_head, grads->var_head);
  const Matrix d_label_pm = model.prior_mean_net.backward(pm_cache, d_mean_p, grads->prior_mean);
  const Matrix d_label_pv = model.prior_var_net.backward(pv_cache, d_var_p, grads->prior_var);

  Matrix d_logits(n, k);
  std::vector<double> d_label(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c)
      d_label[c] = d_enc_in(i, cfg.input_dim + c) + d_label_pm(i, c) + d_label_pv(i, c);
    const auto dl = gumbel_softmax_backward(soft.row(i), temperature, d_label);
    std::copy(dl.begin(), dl.end(), d_logits.row(i).begin());
  }
  model.label_net.backward(label_cache, d_logits, grads->label);
  return out;
}

GmvaeOptimizer::GmvaeOptimizer(double learning_rate) {
  for (AdamState* s : {&label, &prior_mean, &prior_var, &trunk, &mean_head, &var_head, &decoder})
    s->learning_rate = learning_rate;
}

BatchLosses training_step(GmvaeModel& model, const Matrix& batch, double temperature, bool hard,
                          GmvaeOptimizer& opt, Rng& rng) {
  const BatchNoise noise =
      BatchNoise::draw(batch.rows, model.config.components, model.config.latent_dim, rng);
  GmvaeGrads g = GmvaeGrads::zeros(model);
  const BatchLosses losses = gmvae_batch_loss(model, batch, temperature, hard, noise, &g);
  detail::check_finite(losses, "training_step");
  adam_step(opt.label, model.label_net, g.label);
  adam_step(opt.prior_mean, model.prior_mean_net, g.prior_mean);
  adam_step(opt.prior_var, model.prior_var_net, g.prior_var);
  adam_step(opt.trunk, model.encoder.trunk, g.trunk);
  adam_step(opt.mean_head, model.encoder.mean_head, g.mean_head);
  adam_step(opt.var_head, model.encoder.var_head, g.var_head);
  adam_step(opt.decoder, model.decoder, g.decoder);
  return losses;
}

// ---------------------------------------------------------------- training loop

GmvaeModel train(GmvaeModel model, const Matrix& data,
                 std::span<const std::optional<std::string>> labels,
                 const TrainCallbacks& callbacks) {
  const GmvaeConfig cfg = model.config;
  if (cfg.epochs == 0) return model;
  Rng rng(cfg.seed ^ 0x5DEECE66DULL);
  GmvaeOptimizer opt(cfg.learning_rate);
  detail::run_epochs(
      cfg, data, labels, rng, model.history, callbacks,
      [&](const Matrix& batch, long epoch) {
        return training_step(model, batch, cfg.temperature.temperature(epoch, cfg.epochs),
                             cfg.temperature.hard(epoch, cfg.epochs), opt, rng);
      },
      [&](long done) {
        if (callbacks.on_checkpoint) callbacks.on_checkpoint(done, model);
      });
  return model;
}

// ---------------------------------------------------------------- read-out

DiagGaussian prior_for_label(const GmvaeModel& model, std::span<const double> label) {
  if (label.size() != model.components())
    throw Error(ErrorCode::DimensionMismatch, "label length " + std::to_string(label.size()));
  DiagGaussian g;
  g.mean = model.prior_mean_net.forward(label);
  g.variance = model.prior_var_net.forward(label);
  for (double& v : g.variance) v += kVarianceFloor;
  return g;
}

std::vector<DiagGaussian> component_params(const GmvaeModel& model) {
  std::vector<DiagGaussian> out;
  std::vector<double> e(model.components(), 0.0);
  for (std::size_t i = 0; i < model.components(); ++i) {
    std::fill(e.begin(), e.end(), 0.0);
    e[i] = 1.0;
    out.push_back(prior_for_label(model, e));
  }
  return out;
}

std::vector<Chunk> decode_latents(const DenseNet& decoder, const Matrix& latents,
                                  const TileVocab& vocab) {
  const Matrix probs = decoder.forward(latents);
  std::vector<Chunk> chunks;
  chunks.reserve(latents.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) chunks.push_back(decode(probs.row(i), vocab));
  return chunks;
}

std::vector<Chunk> generate(const GmvaeModel& model, std::size_t component, std::size_t n, Rng& rng) {
  if (component >= model.components())
    throw Error(ErrorCode::ComponentOutOfRange, "component " + std::to_string(component) +
                                                    " outside [0, " +
                                                    std::to_string(model.components()) + ")");
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "generate: n must be at least 1");
  std::vector<double> e(model.components(), 0.0);
  e[component] = 1.0;
  const DiagGaussian g = prior_for_label(model, e);
  Matrix z(n, model.config.latent_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = reparam_sample(g, rng);
    std::copy(s.z.begin(), s.z.end(), z.row(i).begin());
  }
  return decode_latents(model.decoder, z, model.vocab);
}

std::vector<EncodedChunk> encode_dataset(const GmvaeModel& model, const Matrix& data) {
  if (data.cols != model.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "encode_dataset: data width " + std::to_string(data.cols));
  std::vector<EncodedChunk> out;
  out.reserve(data.rows);
  const std::size_t bs = 256;
  for (std::size_t lo = 0; lo < data.rows; lo += bs) {
    const std::size_t hi = std::min(data.rows, lo + bs);
    Matrix batch(hi - lo, data.cols);
    std::copy(data.data.begin() + static_cast<long>(lo * data.cols),
              data.data.begin() + static_cast<long>(hi * data.cols), batch.data.begin());
    const Matrix logits = model.label_net.forward(batch);
    std::vector<std::size_t> labels(batch.rows);
    for (std::size_t i = 0; i < batch.rows; ++i) {
      const auto row = logits.row(i);
      labels[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    GaussianEncoder::Cache cache;
    const auto [mean, var] =
        model.encoder.forward(concat_columns(batch, one_hot_rows(labels, model.components())), cache);
    for (std::size_t i = 0; i < batch.rows; ++i)
      out.push_back({std::vector<double>(mean.row(i).begin(), mean.row(i).end()), labels[i]});
  }
  return out;
}

double reconstruction_accuracy(const GmvaeModel& model, const Matrix& data) {
  const auto encoded = encode_dataset(model, data);
  Matrix z(data.rows, model.config.latent_dim);
  for (std::size_t i = 0; i < encoded.size(); ++i)
    std::copy(encoded[i].latent_mean.begin(), encoded[i].latent_mean.end(), z.row(i).begin());
  const auto chunks = decode_latents(model.decoder, z, model.vocab);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const Chunk truth = decode(data.row(i), model.vocab);
    for (std::size_t c = 0; c < kChunkCells; ++c) hits += chunks[i].tiles[c] == truth.tiles[c];
  }
  return static_cast<double>(hits) / static_cast<double>(data.rows * kChunkCells);
}

}  // namespace gmlevel
