#include "gmlevel/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "gmlevel/error.hpp"

namespace gmlevel {

ComponentGenerator make_generator(const GmvaeModel& model) {
  return [&model](std::size_t component, std::size_t n, Rng& rng) {
    return generate(model, component, n, rng);
  };
}

ComponentGenerator make_generator(const VaeGmm& model) {
  return [&model](std::size_t component, std::size_t n, Rng& rng) {
    return generate(model, component, n, rng);
  };
}

// ---------------------------------------------------------------- matching

std::vector<std::size_t> hungarian_min_cost(const Matrix& cost) {
  if (cost.rows != cost.cols) throw Error(ErrorCode::ShapeMismatch, "assignment cost matrix must be square");
  const std::size_t n = cost.rows;
  if (n == 0) return {};
  // Shortest augmenting paths with row/column potentials; 1-based with a
  // virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::vector<std::size_t> exhaustive_min_cost(const Matrix& cost) {
  if (cost.rows != cost.cols) throw Error(ErrorCode::ShapeMismatch, "assignment cost matrix must be square");
  if (cost.rows > 10) throw Error(ErrorCode::InvalidConfig, "exhaustive assignment limited to n <= 10");
  std::vector<std::size_t> perm(cost.rows), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += cost(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------- clustering

ClusterReport clustering_accuracy(std::span<const std::size_t> components,
                                  std::span<const std::optional<std::string>> types, std::size_t k) {
  if (components.size() != types.size())
    throw Error(ErrorCode::LengthMismatch, "one type per clustered chunk required");
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");
  ClusterReport rep;
  rep.k = k;
  std::map<std::string, std::size_t> type_index;
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (!types[i]) throw Error(ErrorCode::MissingLabels, "chunk " + std::to_string(i) + " has no level type");
    type_index.emplace(*types[i], 0);
  }
  for (auto& [name, idx] : type_index) {
    idx = rep.types.size();
    rep.types.push_back(name);
  }
  const std::size_t m = rep.types.size();
  rep.confusion.assign(k, std::vector<std::size_t>(m, 0));
  std::vector<std::size_t> type_size(m, 0);
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (components[i] >= k)
      throw Error(ErrorCode::ComponentOutOfRange, "label " + std::to_string(components[i]) +
                                                      " outside [0, " + std::to_string(k) + ")");
    const std::size_t t = type_index.at(*types[i]);
    ++rep.confusion[components[i]][t];
    ++type_size[t];
  }
  rep.assignment.assign(m, std::nullopt);
  rep.per_type_accuracy.assign(m, 0.0);
  if (m == 0) return rep;

  const std::size_t n = std::max(k, m);
  Matrix cost(n, n);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t t = 0; t < m; ++t)
      cost(c, t) = -static_cast<double>(rep.confusion[c][t]) / static_cast<double>(type_size[t]);
  const auto match = hungarian_min_cost(cost);
  std::size_t matched = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t t = match[c];
    if (t >= m) continue;
    rep.assignment[t] = c;
    rep.per_type_accuracy[t] = static_cast<double>(rep.confusion[c][t]) / static_cast<double>(type_size[t]);
    matched += rep.confusion[c][t];
  }
  rep.balanced_accuracy =
      std::accumulate(rep.per_type_accuracy.begin(), rep.per_type_accuracy.end(), 0.0) / static_cast<double>(m);
  rep.overall_accuracy = static_cast<double>(matched) / static_cast<double>(components.size());
  return rep;
}

// ---------------------------------------------------------------- disentanglement

double proportion_at_least(std::span<const double> accuracies, double threshold) {
  if (accuracies.empty()) return 0.0;
  const auto hits = std::count_if(accuracies.begin(), accuracies.end(),
                                  [&](double a) { return a >= threshold; });
  return static_cast<double>(hits) / static_cast<double>(accuracies.size());
}

namespace {

std::vector<std::size_t> probe_predict(const DenseNet& net, const Matrix& x) {
  const Matrix logits = net.forward(x);
  std::vector<std::size_t> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace

DisentanglementReport disentanglement(const ComponentGenerator& generator, std::size_t k,
                                      const TileVocab& vocab, Rng& rng, const ProbeConfig& probe) {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "disentanglement needs k >= 2");
  if (probe.train_per_component == 0 || probe.validation_per_component == 0 || probe.batch_size == 0)
    throw Error(ErrorCode::InvalidConfig, "probe split sizes and batch size must be positive");
  const std::size_t per = probe.train_per_component + probe.validation_per_component;
  const std::size_t d = kChunkCells * vocab.size();

  Matrix train(k * probe.train_per_component, d), valid(k * probe.validation_per_component, d);
  std::vector<std::size_t> train_y, valid_y;
  for (std::size_t c = 0; c < k; ++c) {
    Rng stream = rng.split();
    const auto chunks = generator(c, per, stream);
    if (chunks.size() != per)
      throw Error(ErrorCode::GeneratorFailure, "component " + std::to_string(c) + " produced " +
                                                   std::to_string(chunks.size()) + " of " +
                                                   std::to_string(per) + " chunks");
    for (std::size_t i = 0; i < per; ++i) {
      if (i < probe.train_per_component) {
        one_hot_encode(chunks[i], vocab.size(), train.row(train_y.size()));
        train_y.push_back(c);
      } else {
        one_hot_encode(chunks[i], vocab.size(), valid.row(valid_y.size()));
        valid_y.push_back(c);
      }
    }
  }

  Rng probe_rng = rng.split();
  std::vector<std::size_t> sizes{d};
  std::vector<Activation> acts;
  for (std::size_t i = 0; i < probe.hidden_depth; ++i) {
    sizes.push_back(probe.hidden_width);
    acts.push_back(Activation::Relu);
  }
  sizes.push_back(k);
  acts.push_back(Activation::Linear);
  DenseNet net = DenseNet::make(sizes, acts, probe_rng);
  AdamState adam;
  adam.learning_rate = probe.learning_rate;

  auto validation_accuracy = [&](const DenseNet& n) {
    const auto pred = probe_predict(n, valid);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == valid_y[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
  };

  DenseNet best = net;
  double best_acc = -1.0;
  std::size_t since_best = 0, epochs_run = 0;
  std::vector<std::size_t> order(train.rows);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < probe.epochs; ++e) {
    shuffle(order, probe_rng);
    for (std::size_t lo = 0; lo < order.size(); lo += probe.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + probe.batch_size);
      Matrix xb(hi - lo, d);
      for (std::size_t i = lo; i < hi; ++i)
        std::copy(train.row(order[i]).begin(), train.row(order[i]).end(), xb.row(i - lo).begin());
      ForwardCache cache;
      const Matrix logits = net.forward(xb, cache);
      Matrix grad(xb.rows, k);
      const double inv = 1.0 / static_cast<double>(xb.rows);
      for (std::size_t i = 0; i < xb.rows; ++i) {
        softmax_cross_entropy(logits.row(i), train_y[order[lo + i]], grad.row(i));
        for (double& g : grad.row(i)) g *= inv;
      }
      NetGrad g = net.zero_grad();
      net.backward_from_preact(cache, grad, g);
      adam_step(adam, net, g);
    }
    ++epochs_run;
    const double acc = validation_accuracy(net);
    if (acc > best_acc) {
      best_acc = acc;
      best = net;
      since_best = 0;
    } else if (++since_best >= probe.patience) {
      break;
    }
  }

  DisentanglementReport rep;
  rep.k = k;
  rep.probe_epochs = epochs_run;
  const auto pred = probe_predict(best, valid);
  rep.component_accuracy.assign(k, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) rep.component_accuracy[valid_y[i]] += pred[i] == valid_y[i];
  for (double& a : rep.component_accuracy) a /= static_cast<double>(probe.validation_per_component);
  rep.p70 = proportion_at_least(rep.component_accuracy, 0.70);
  rep.p80 = proportion_at_least(rep.component_accuracy, 0.80);
  rep.p90 = proportion_at_least(rep.component_accuracy, 0.90);
  std::ostringstream desc;
  desc << "mlp " << d;
  for (std::size_t i = 0; i < probe.hidden_depth; ++i) desc << "-" << probe.hidden_width;
  desc << "-" << k << " relu, adam lr " << probe.learning_rate << ", batch " << probe.batch_size
       << ", max " << probe.epochs << " epochs, patience " << probe.patience << ", split "
       << probe.train_per_component << "/" << probe.validation_per_component;
  rep.probe = desc.str();
  return rep;
}

// ---------------------------------------------------------------- tile densities

TileDensityMatrix tile_densities(const std::vector<std::vector<Chunk>>& groups, const TileVocab& vocab) {
  if (groups.empty()) throw Error(ErrorCode::EmptyComponent, "no components to summarize");
  const auto bg = vocab.background_id();
  std::vector<std::size_t> keep;
  TileDensityMatrix out;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (bg && id == *bg) continue;
    keep.push_back(id);
    out.tiles.push_back(vocab.char_of(id));
  }
  const std::size_t k = groups.size();
  out.mean_counts.resize(k, keep.size());
  out.normalized.resize(k, keep.size());
  std::vector<std::size_t> column_of(vocab.size(), keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) column_of[keep[j]] = j;

  for (std::size_t c = 0; c < k; ++c) {
    if (groups[c].empty())
      throw Error(ErrorCode::EmptyComponent, "component " + std::to_string(c) + " has no chunks");
    std::vector<std::size_t> counts(vocab.size(), 0);
    for (const auto& chunk : groups[c])
      for (std::uint8_t id : chunk.tiles) {
        if (id >= vocab.size()) throw Error(ErrorCode::IdOutOfRange, "tile id " + std::to_string(id));
        ++counts[id];
      }
    for (std::size_t j = 0; j < keep.size(); ++j)
      out.mean_counts(c, j) = static_cast<double>(counts[keep[j]]) / static_cast<double>(groups[c].size());
    out.chunks_per_component.push_back(groups[c].size());
  }
  for (std::size_t j = 0; j < keep.size(); ++j) {
    double mx = 0.0;
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, out.mean_counts(c, j));
    for (std::size_t c = 0; c < k; ++c) out.normalized(c, j) = mx > 0.0 ? out.mean_counts(c, j) / mx : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------- playability

PlayabilityReport playability_suite(const ComponentGenerator& generator, std::size_t k,
                                    const TileVocab& vocab, const PlayabilityRules& rules, Rng& rng,
                                    std::size_t total_budget) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");
  PlayabilityReport rep;
  rep.k = k;
  rep.per_component = total_budget / k;
  if (rep.per_component == 0) throw Error(ErrorCode::InvalidConfig, "budget smaller than k");
  rep.playable_per_component.assign(k, 0);
  for (std::size_t c = 0; c < k; ++c) {
    Rng stream = rng.split();
    const auto chunks = generator(c, rep.per_component, stream);
    if (chunks.size() != rep.per_component)
      throw Error(ErrorCode::GeneratorFailure, "component " + std::to_string(c) + " produced " +
                                                   std::to_string(chunks.size()) + " chunks");
    // Validate coverage up front so worker threads never throw.
    (void)find_path(chunks.front(), vocab, rules);
    std::size_t ok = 0;
#pragma omp parallel for reduction(+ : ok) schedule(dynamic, 16)
    for (long i = 0; i < static_cast<long>(chunks.size()); ++i)
      ok += playable(chunks[static_cast<std::size_t>(i)], vocab, rules) ? 1 : 0;
    rep.playable_per_component[c] = ok;
    rep.playable += ok;
    rep.total += chunks.size();
  }
  rep.fraction = static_cast<double>(rep.playable) / static_cast<double>(rep.total);
  return rep;
}

// ---------------------------------------------------------------- export

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string export_latents_csv(std::span<const EncodedChunk> encoded, std::span<const Chunk> chunks) {
  if (encoded.size() != chunks.size())
    throw Error(ErrorCode::LengthMismatch, "one encoding per chunk required");
  const std::size_t dim = encoded.empty() ? 0 : encoded.front().latent_mean.size();
  std::string out = "chunk_id,level_type,label";
  for (std::size_t j = 0; j < dim; ++j) out += ",z" + std::to_string(j);
  out += "\n";
  char buf[32];
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const auto& src = chunks[i].source;
    out += csv_field(src.level_id + ":" + std::to_string(src.row_offset) + ":" + std::to_string(src.col_offset));
    out += "," + csv_field(chunks[i].level_type.value_or(""));
    out += "," + std::to_string(encoded[i].label);
    if (encoded[i].latent_mean.size() != dim)
      throw Error(ErrorCode::LengthMismatch, "latent sizes differ between chunks");
    for (double z : encoded[i].latent_mean) {
      std::snprintf(buf, sizeof buf, "%.17g", z);
      out += ",";
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace gmlevel
