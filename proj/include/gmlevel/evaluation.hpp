#ifndef GMLEVEL_EVALUATION_HPP
#define GMLEVEL_EVALUATION_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmlevel/baseline.hpp"
#include "gmlevel/corpus.hpp"
#include "gmlevel/gmvae.hpp"
#include "gmlevel/matrix.hpp"
#include "gmlevel/playability.hpp"
#include "gmlevel/random.hpp"

namespace gmlevel {

/// Draws n chunks from one mixture component.
using ComponentGenerator = std::function<std::vector<Chunk>(std::size_t component, std::size_t n, Rng& rng)>;

ComponentGenerator make_generator(const GmvaeModel& model);
ComponentGenerator make_generator(const VaeGmm& model);

// ---------------------------------------------------------------- matching

/// Minimum-cost perfect matching on a square cost matrix; result[row] = column.
std::vector<std::size_t> hungarian_min_cost(const Matrix& cost);
/// Same problem by trying every permutation. Small n only.
std::vector<std::size_t> exhaustive_min_cost(const Matrix& cost);

// ---------------------------------------------------------------- clustering

struct ClusterReport {
  std::size_t k = 0;
  std::vector<std::string> types;  ///< sorted
  /// components x types counts
  std::vector<std::vector<std::size_t>> confusion;
  /// Component matched to each type; nullopt when k < number of types and the
  /// type is left without one.
  std::vector<std::optional<std::size_t>> assignment;
  std::vector<double> per_type_accuracy;
  double balanced_accuracy = 0.0;  ///< mean of per_type_accuracy
  double overall_accuracy = 0.0;   ///< matched chunks / all chunks
};

/// Macro accuracy under the component-to-type matching that maximizes it.
/// Throws MissingLabels if a chunk has no type.
ClusterReport clustering_accuracy(std::span<const std::size_t> components,
                                  std::span<const std::optional<std::string>> types, std::size_t k);

// ---------------------------------------------------------------- disentanglement

struct ProbeConfig {
  std::size_t train_per_component = 300;
  std::size_t validation_per_component = 200;
  std::size_t hidden_width = 256;
  std::size_t hidden_depth = 2;
  double learning_rate = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  /// Stop after this many epochs without a better validation accuracy and keep
  /// the best weights.
  std::size_t patience = 5;
  std::uint64_t seed = 7;
};

struct DisentanglementReport {
  std::size_t k = 0;
  std::vector<double> component_accuracy;
  double p70 = 0.0, p80 = 0.0, p90 = 0.0;  ///< fraction of components at or above
  std::size_t probe_epochs = 0;
  std::string probe;
};

/// Generates train + validation chunks per component, trains one k-way MLP on
/// all training chunks and scores each component on its own validation chunks.
/// Throws GeneratorFailure if the generator returns the wrong count.
DisentanglementReport disentanglement(const ComponentGenerator& generator, std::size_t k,
                                      const TileVocab& vocab, Rng& rng,
                                      const ProbeConfig& probe = {});

/// Fraction of `accuracies` at or above `threshold`.
double proportion_at_least(std::span<const double> accuracies, double threshold);

// ---------------------------------------------------------------- tile densities

struct TileDensityMatrix {
  std::string tiles;  ///< column characters, vocabulary order, background removed
  Matrix mean_counts;  ///< components x tiles, mean count per chunk
  Matrix normalized;   ///< each column divided by its maximum (zero columns stay zero)
  std::vector<std::size_t> chunks_per_component;

  std::size_t components() const { return normalized.rows; }
};

/// Throws EmptyComponent if a group has no chunks.
TileDensityMatrix tile_densities(const std::vector<std::vector<Chunk>>& groups, const TileVocab& vocab);

// ---------------------------------------------------------------- playability

struct PlayabilityReport {
  std::size_t k = 0;
  std::size_t per_component = 0;  ///< floor(total_budget / k)
  std::vector<std::size_t> playable_per_component;
  std::size_t total = 0;
  std::size_t playable = 0;
  double fraction = 0.0;
};

/// Samples floor(total_budget / k) chunks from every component and runs the
/// path search on each. Components draw from independent split streams.
PlayabilityReport playability_suite(const ComponentGenerator& generator, std::size_t k,
                                    const TileVocab& vocab, const PlayabilityRules& rules, Rng& rng,
                                    std::size_t total_budget = 10000);

// ---------------------------------------------------------------- export

/// Header plus one row per chunk: chunk id, level type, label, latent means.
std::string export_latents_csv(std::span<const EncodedChunk> encoded, std::span<const Chunk> chunks);

std::string csv_field(std::string_view s);

}  // namespace gmlevel

#endif  // GMLEVEL_EVALUATION_HPP
