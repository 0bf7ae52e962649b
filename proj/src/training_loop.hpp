#ifndef GMLEVEL_TRAINING_LOOP_HPP
#define GMLEVEL_TRAINING_LOOP_HPP

// Epoch/batch driver shared by the GMVAE and the baseline VAE.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmlevel/corpus.hpp"
#include "gmlevel/error.hpp"
#include "gmlevel/gmvae.hpp"

namespace gmlevel::detail {

inline Matrix gather_rows(const Matrix& data, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), data.cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(data.row(idx[i]).begin(), data.row(idx[i]).end(), out.row(i).begin());
  return out;
}

/// `step(batch, epoch)` returns the batch losses; `checkpoint(epochs_done)`
/// fires every cfg.checkpoint_every epochs except after the last one.
template <class Step, class Checkpoint>
void run_epochs(const GmvaeConfig& cfg, const Matrix& data,
                std::span<const std::optional<std::string>> labels, Rng& rng,
                TrainingHistory& history, const TrainCallbacks& callbacks, Step&& step,
                Checkpoint&& checkpoint) {
  if (data.rows == 0) throw Error(ErrorCode::InvalidConfig, "training needs at least one chunk");
  if (data.cols != cfg.input_dim)
    throw Error(ErrorCode::DimensionMismatch, "training data width " + std::to_string(data.cols) +
                                                  ", model expects " + std::to_string(cfg.input_dim));
  std::optional<BalancedSampler> sampler;
  if (cfg.sampler == SamplerKind::Balanced) {
    if (labels.size() != data.rows)
      throw Error(ErrorCode::MissingLabels, "balanced sampler needs one label per chunk");
    sampler.emplace(labels, cfg.seed + 1);
  }
  const std::size_t bs = cfg.batch_size;
  const std::size_t batches = (data.rows + bs - 1) / bs;
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), 0);
  const long first = history.epochs.empty() ? 0 : history.epochs.back().epoch + 1;

  for (long e = 0; e < cfg.epochs; ++e) {
    if (!sampler) shuffle(order, rng);
    double recon = 0.0, kl = 0.0;
    std::size_t seen = 0;
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < batches; ++b) {
      if (sampler) {
        idx.resize(bs);
        for (auto& i : idx) i = sampler->next();
      } else {
        const std::size_t lo = b * bs, hi = std::min(data.rows, lo + bs);
        idx.assign(order.begin() + static_cast<long>(lo), order.begin() + static_cast<long>(hi));
      }
      const BatchLosses l = step(gather_rows(data, idx), e);
      recon += l.recon * static_cast<double>(idx.size());
      kl += l.kl * static_cast<double>(idx.size());
      seen += idx.size();
    }
    EpochRecord rec;
    rec.epoch = first + e;
    rec.recon_loss = recon / static_cast<double>(seen);
    rec.kl_loss = kl / static_cast<double>(seen);
    rec.total_loss = cfg.recon_weight * rec.recon_loss + cfg.kl_weight * rec.kl_loss;
    rec.temperature = cfg.temperature.temperature(e, cfg.epochs);
    rec.hard = cfg.temperature.hard(e, cfg.epochs);
    history.epochs.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0 && e + 1 < cfg.epochs)
      checkpoint(e + 1);
  }
}

inline void check_finite(const BatchLosses& l, const char* where) {
  if (!std::isfinite(l.recon) || !std::isfinite(l.kl) || !std::isfinite(l.total)) {
    throw Error(ErrorCode::NonFiniteLoss, std::string(where) + ": reconstruction " +
                                              std::to_string(l.recon) + ", KL " +
                                              std::to_string(l.kl) + ", total " +
                                              std::to_string(l.total));
  }
}

}  // namespace gmlevel::detail

#endif  // GMLEVEL_TRAINING_LOOP_HPP
