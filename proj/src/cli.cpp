#include "gmlevel/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmlevel/baseline.hpp"
#include "gmlevel/checkpoint.hpp"
#include "gmlevel/corpus.hpp"
#include "gmlevel/evaluation.hpp"
#include "gmlevel/gmvae.hpp"
#include "gmlevel/playability.hpp"
#include "gmlevel/render.hpp"

namespace gmlevel::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Usage: return kExitUsage;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Numeric: return kExitNumeric;
  }
  return kExitData;
}

namespace {

// Flags that only say where output goes. They stay out of the provenance
// block so identical runs written to different places compare equal.
const std::set<std::string> kLocationFlags{"out", "out-dir", "history", "dump", "csv", "json", "log-every"};

Provenance provenance_of(const CLI::App& sub, std::uint64_t seed) {
  Provenance p;
  p.command = sub.get_name();
  p.seed = seed;
  for (const CLI::Option* o : sub.get_options()) {
    const std::string& name = o->get_single_name();
    if (name == "help" || kLocationFlags.count(name)) continue;
    std::string value;
    if (o->count() > 0) {
      for (const auto& r : o->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = o->get_default_str();
    }
    p.flags[name] = value;
  }
  return p;
}

json provenance_json(const Provenance& p) {
  return {{"command", p.command}, {"flags", p.flags}, {"seed", p.seed}, {"version", p.version}};
}

void write_json_artifact(const std::string& path, json body, const Provenance& p) {
  body["provenance"] = provenance_json(p);
  write_text_file(path, body.dump(1) + "\n");
}

// CSV and text artifacts carry their provenance in a sibling file.
void write_text_artifact(const std::string& path, const std::string& text, const Provenance& p) {
  write_text_file(path, text);
  write_text_file(path + ".provenance.json", provenance_json(p).dump(1) + "\n");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

std::vector<std::optional<std::string>> labels_of(const std::vector<Chunk>& chunks) {
  std::vector<std::optional<std::string>> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.push_back(c.level_type);
  return out;
}

std::vector<Chunk> remap_chunks(const std::vector<Chunk>& chunks, const TileVocab& from, const TileVocab& to) {
  if (from == to) return chunks;
  std::vector<std::uint8_t> table(from.size());
  for (std::size_t id = 0; id < from.size(); ++id) table[id] = to.id_of(from.char_of(id));
  std::vector<Chunk> out = chunks;
  for (auto& c : out)
    for (auto& t : c.tiles) t = table.at(t);
  return out;
}

// ---------------------------------------------------------------- models

struct LoadedModel {
  std::string format;
  std::optional<GmvaeModel> gmvae;
  std::optional<VaeGmm> vae_gmm;

  const TileVocab& vocab() const { return gmvae ? gmvae->vocab : vae_gmm->vae.vocab; }
  std::size_t k() const { return gmvae ? gmvae->components() : vae_gmm->components(); }
  ComponentGenerator generator() const { return gmvae ? make_generator(*gmvae) : make_generator(*vae_gmm); }

  std::vector<EncodedChunk> encode(const Matrix& data) const {
    if (gmvae) return encode_dataset(*gmvae, data);
    const Matrix latents = vae_latent_means(vae_gmm->vae, data);
    const auto labels = gmm_predict(vae_gmm->gmm, pca_project(vae_gmm->pca, latents));
    std::vector<EncodedChunk> out(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) {
      out[i].latent_mean.assign(latents.row(i).begin(), latents.row(i).end());
      out[i].label = labels[i];
    }
    return out;
  }
};

LoadedModel load_model(const std::string& path) {
  const std::string text = read_text_file(path);
  LoadedModel m;
  m.format = checkpoint_format(text);
  if (m.format == "gmvae")
    m.gmvae = load_gmvae(text);
  else if (m.format == "vae-gmm")
    m.vae_gmm = load_vae_gmm(text);
  else
    throw Error(ErrorCode::CheckpointError, "unknown checkpoint format '" + m.format + "'");
  return m;
}

struct ModelData {
  Corpus corpus;
  std::vector<Chunk> chunks;  ///< in the model's vocabulary
  Matrix data;
};

ModelData corpus_for(const LoadedModel& m, const std::string& manifest) {
  ModelData md;
  md.corpus = load_corpus(load_manifest(manifest));
  md.chunks = remap_chunks(md.corpus.chunks, md.corpus.vocab, m.vocab());
  md.data = encode_all(md.chunks, m.vocab());
  return md;
}

PlayabilityRules rules_for(const std::string& game, const std::string& manifest) {
  std::map<char, Solidity> overrides;
  if (!manifest.empty()) overrides = load_manifest(manifest).solidity;
  return PlayabilityRules::for_game(game, overrides);
}

// ---------------------------------------------------------------- shared flags

struct ModelFlags {
  std::string manifest;
  std::size_t k = 10;
  long epochs = 10000;
  std::uint64_t seed = 42;
  std::string out;
  std::size_t hidden = 512, depth = 3, latent = 64, batch = 64;
  double lr = 1e-3, kl_weight = 2.0, recon_weight = 1.0;
  double tau_start = 1.0, tau_min = 0.5, tau_decay = 0.0;
  long hard_from = -1;
  std::string sampler = "uniform";
  long checkpoint_every = 0;
  std::string history;
  long log_every = 100;

  void add(CLI::App* sub, bool single_k, bool gumbel) {
    sub->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
    if (single_k) {
      sub->add_option("--k", k, "Number of mixture components");
      sub->add_option("--out", out, "Checkpoint path")->required();
      sub->add_option("--history", history, "Per-epoch loss CSV");
      sub->add_option("--checkpoint-every", checkpoint_every, "Extra checkpoint every N epochs (0: off)");
    }
    sub->add_option("--epochs", epochs, "Training epochs");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--hidden", hidden, "Hidden layer width");
    sub->add_option("--depth", depth, "Hidden layers per network");
    sub->add_option("--latent", latent, "Latent dimension");
    sub->add_option("--batch", batch, "Batch size");
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--kl-weight", kl_weight, "Weight of the KL term");
    sub->add_option("--recon-weight", recon_weight, "Weight of the reconstruction term");
    sub->add_option("--sampler", sampler, "Batch sampler: uniform or balanced")
        ->check(CLI::IsMember({"uniform", "balanced"}));
    if (gumbel) {
      sub->add_option("--tau-start", tau_start, "Initial Gumbel-Softmax temperature");
      sub->add_option("--tau-min", tau_min, "Final temperature");
      sub->add_option("--tau-decay", tau_decay, "Per-epoch decay rate (0: reach tau-min at hard-from)");
      sub->add_option("--hard-from", hard_from, "First straight-through epoch (-1: half of training)");
    }
    sub->add_option("--log-every", log_every, "Progress line every N epochs on stderr (0: silent)");
  }

  GmvaeConfig config(std::size_t input_dim, std::size_t components) const {
    GmvaeConfig c;
    c.input_dim = input_dim;
    c.components = components;
    c.latent_dim = latent;
    c.hidden_width = hidden;
    c.hidden_depth = depth;
    c.batch_size = batch;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.kl_weight = kl_weight;
    c.recon_weight = recon_weight;
    c.temperature.start = tau_start;
    c.temperature.min = tau_min;
    c.temperature.decay = tau_decay;
    c.temperature.hard_from = hard_from;
    c.seed = seed;
    c.checkpoint_every = checkpoint_every;
    c.sampler = parse_sampler(sampler);
    return c;
  }

  TrainCallbacks progress(std::ostream& err, const std::string& tag) const {
    TrainCallbacks cb;
    if (log_every > 0) {
      const long every = log_every, total = epochs;
      cb.on_epoch = [&err, every, total, tag](const EpochRecord& r) {
        if ((r.epoch + 1) % every != 0 && r.epoch + 1 != total && r.epoch != 0) return;
        err << tag << " epoch " << r.epoch + 1 << "/" << total << " recon " << fixed(r.recon_loss)
            << " kl " << fixed(r.kl_loss) << " total " << fixed(r.total_loss) << " tau "
            << fixed(r.temperature, 3) << (r.hard ? " hard" : "") << "\n";
      };
    }
    return cb;
  }
};

std::string history_csv(const TrainingHistory& h) {
  std::string out = "epoch,recon,kl,total,temperature,hard\n";
  for (const auto& e : h.epochs)
    out += std::to_string(e.epoch) + "," + fmt(e.recon_loss) + "," + fmt(e.kl_loss) + "," + fmt(e.total_loss) +
           "," + fmt(e.temperature) + "," + (e.hard ? "1" : "0") + "\n";
  return out;
}

struct ProbeFlags {
  ProbeConfig probe;
  void add(CLI::App* sub) {
    sub->add_option("--train-per", probe.train_per_component, "Probe training chunks per component");
    sub->add_option("--valid-per", probe.validation_per_component, "Probe validation chunks per component");
    sub->add_option("--probe-hidden", probe.hidden_width, "Probe hidden width");
    sub->add_option("--probe-epochs", probe.epochs, "Probe epoch limit");
    sub->add_option("--patience", probe.patience, "Probe early-stopping patience");
  }
};

GmmOptions gmm_options_add(CLI::App* sub, GmmOptions& o) {
  sub->add_option("--restarts", o.restarts, "EM restarts");
  sub->add_option("--gmm-iters", o.max_iters, "EM iteration limit");
  sub->add_option("--gmm-tol", o.tol, "EM stopping tolerance on mean log-likelihood");
  sub->add_option("--ridge", o.ridge, "Covariance ridge");
  return o;
}

json disentanglement_json(const DisentanglementReport& r) {
  return {{"k", r.k},
          {"component_accuracy", r.component_accuracy},
          {"p70", r.p70},
          {"p80", r.p80},
          {"p90", r.p90},
          {"probe_epochs", r.probe_epochs},
          {"probe", r.probe}};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

std::string density_csv(const TileDensityMatrix& m) {
  std::string out = "component,chunks";
  for (char t : m.tiles) out += "," + csv_field(std::string(1, t));
  out += "\n";
  for (std::size_t c = 0; c < m.components(); ++c) {
    out += std::to_string(c) + "," + std::to_string(m.chunks_per_component[c]);
    for (std::size_t j = 0; j < m.tiles.size(); ++j) out += "," + fmt(m.normalized(c, j));
    out += "\n";
  }
  return out;
}

TileDensityMatrix parse_density_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyMatrix, "density file is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "component" || header[1] != "chunks")
    throw Error(ErrorCode::ManifestError, "density header must start with component,chunks");
  TileDensityMatrix m;
  for (std::size_t j = 2; j < header.size(); ++j) {
    if (header[j].size() != 1) throw Error(ErrorCode::ManifestError, "tile header '" + header[j] + "'");
    m.tiles += header[j];
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw Error(ErrorCode::RaggedRows, "density row width differs from header");
    m.chunks_per_component.push_back(std::stoul(f[1]));
    std::vector<double> row;
    for (std::size_t j = 2; j < f.size(); ++j) row.push_back(std::stod(f[j]));
    rows.push_back(std::move(row));
  }
  m.normalized.resize(rows.size(), m.tiles.size());
  for (std::size_t c = 0; c < rows.size(); ++c)
    for (std::size_t j = 0; j < m.tiles.size(); ++j) m.normalized(c, j) = rows[c][j];
  m.mean_counts = m.normalized;
  return m;
}

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size()) throw Error(ErrorCode::UsageError, std::string(what) + ": bad entry '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw Error(ErrorCode::UsageError, std::string(what) + " list is empty");
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian-mixture VAEs for tile-based level chunks"};
  app.name("gmlevel");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string(kCodeVersion));

  std::vector<std::pair<CLI::App*, std::function<void()>>> commands;

  // ingest
  std::string ingest_manifest, ingest_dump, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Parse a corpus and report chunk statistics");
  ingest->add_option("--manifest", ingest_manifest, "Dataset manifest (JSON)")->required();
  ingest->add_option("--dump", ingest_dump, "Write every chunk as JSONL");
  ingest->add_option("--out", ingest_out, "Summary report (JSON)");
  commands.emplace_back(ingest, [&] {
    const Corpus corpus = load_corpus(load_manifest(ingest_manifest));
    std::map<std::string, std::size_t> per_type;
    for (const auto& c : corpus.chunks) ++per_type[c.level_type.value_or("(none)")];
    out << "game " << corpus.manifest.game << ": " << corpus.levels.size() << " levels, " << corpus.vocab.size()
        << " tile types '" << corpus.vocab.chars() << "', d = " << corpus.input_dim() << ", "
        << corpus.chunks.size() << " chunks (" << axis_name(corpus.manifest.axis) << ", labels "
        << corpus.label_source << ")\n";
    for (const auto& [t, n] : per_type) out << "  " << t << ": " << n << "\n";
    const Provenance prov = provenance_of(*ingest, 0);
    if (!ingest_dump.empty()) write_text_artifact(ingest_dump, write_chunk_dump(corpus.chunks, corpus.vocab), prov);
    if (!ingest_out.empty()) {
      json levels = json::array();
      const ExtractOptions opts = extract_options(corpus.manifest);
      for (const auto& l : corpus.levels)
        levels.push_back({{"id", l.level_id},
                          {"rows", l.rows},
                          {"cols", l.cols},
                          {"type", l.level_type ? json(*l.level_type) : json()},
                          {"chunks", chunk_count(l, opts)}});
      write_json_artifact(ingest_out,
                          {{"game", corpus.manifest.game},
                           {"axis", std::string(axis_name(corpus.manifest.axis))},
                           {"tiles", corpus.vocab.chars()},
                           {"tile_types", corpus.vocab.size()},
                           {"input_dim", corpus.input_dim()},
                           {"chunks", corpus.chunks.size()},
                           {"label_source", corpus.label_source},
                           {"type_counts", per_type},
                           {"levels", levels}},
                          prov);
    }
  });

  // train
  ModelFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a GMVAE");
  train_flags.add(train_cmd, true, true);
  commands.emplace_back(train_cmd, [&] {
    const auto& f = train_flags;
    const Corpus corpus = load_corpus(load_manifest(f.manifest));
    const Matrix data = encode_all(corpus.chunks, corpus.vocab);
    const auto labels = labels_of(corpus.chunks);
    const Provenance prov = provenance_of(*train_cmd, f.seed);
    GmvaeModel model = build_model(f.config(corpus.input_dim(), f.k), corpus.vocab);
    TrainCallbacks cb = f.progress(err, "gmvae");
    cb.on_checkpoint = [&](long epoch, const GmvaeModel& m) {
      write_text_file(with_suffix(f.out, ".epoch" + std::to_string(epoch)), save_gmvae(m, prov));
    };
    model = train(std::move(model), data, labels, cb);
    write_text_file(f.out, save_gmvae(model, prov));
    if (!f.history.empty()) write_text_artifact(f.history, history_csv(model.history), prov);
    out << "trained " << model.components() << "-component GMVAE on " << data.rows << " chunks for "
        << model.history.epochs.size() << " epochs";
    if (!model.history.epochs.empty()) {
      const auto& last = model.history.epochs.back();
      out << "; final recon " << fixed(last.recon_loss) << ", kl " << fixed(last.kl_loss);
    }
    out << "\nwrote " << f.out << "\n";
  });

  // train-baseline
  ModelFlags base_flags;
  base_flags.k = 3;
  GmmOptions gmm_opts;
  auto* base_cmd = app.add_subcommand("train-baseline", "Train a VAE and fit PCA + GMM on its latent means");
  base_flags.add(base_cmd, true, false);
  gmm_options_add(base_cmd, gmm_opts);
  commands.emplace_back(base_cmd, [&] {
    const auto& f = base_flags;
    const Corpus corpus = load_corpus(load_manifest(f.manifest));
    const Matrix data = encode_all(corpus.chunks, corpus.vocab);
    const Provenance prov = provenance_of(*base_cmd, f.seed);
    if (f.k < 1) throw Error(ErrorCode::InvalidConfig, "k must be at least 1");
    VaeModel vae = build_vae(f.config(corpus.input_dim(), f.k), corpus.vocab);
    vae = train_vae(std::move(vae), data, labels_of(corpus.chunks), f.progress(err, "vae"));
    const VaeGmm model = fit_vae_gmm(std::move(vae), data, f.k, f.seed, gmm_opts);
    write_text_file(f.out, save_vae_gmm(model, prov));
    if (!f.history.empty()) write_text_artifact(f.history, history_csv(model.vae.history), prov);
    out << "trained VAE on " << data.rows << " chunks; PCA keeps " << model.pca.retained << " of "
        << model.pca.input_dim() << " axes (" << fixed(model.pca.retained_fraction()) << "); "
        << model.components() << "-component GMM after " << model.gmm.iterations
        << " EM iterations, mean log-likelihood " << fixed(model.gmm.log_likelihood) << "\nwrote " << f.out << "\n";
  });

  // generate
  std::string gen_model, gen_out, gen_manifest;
  std::size_t gen_component = 0, gen_n = 6;
  std::uint64_t gen_seed = 42;
  bool gen_paths = false;
  auto* gen_cmd = app.add_subcommand("generate", "Sample chunks from one component as ASCII");
  gen_cmd->add_option("--model", gen_model, "Checkpoint")->required();
  gen_cmd->add_option("--component", gen_component, "Component index")->required();
  gen_cmd->add_option("--n", gen_n, "Number of chunks");
  gen_cmd->add_option("--seed", gen_seed, "Random seed");
  gen_cmd->add_option("--out", gen_out, "Text file (default: stdout)");
  gen_cmd->add_flag("--paths", gen_paths, "Overlay the path found by the playability search with 'P'");
  gen_cmd->add_option("--manifest", gen_manifest, "Manifest supplying solidity classes for --paths");
  commands.emplace_back(gen_cmd, [&] {
    const LoadedModel m = load_model(gen_model);
    Rng rng(gen_seed);
    const auto chunks = m.generator()(gen_component, gen_n, rng);
    std::optional<PlayabilityRules> rules;
    if (gen_paths) rules = rules_for(m.vocab().game(), gen_manifest);
    std::string text;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (i) text += "\n";
      if (rules) {
        const PlayPath p = find_path(chunks[i], m.vocab(), *rules);
        text += p.playable ? render_chunk_with_path(chunks[i], m.vocab(), p.cells)
                           : render_chunk_ascii(chunks[i], m.vocab());
      } else {
        text += render_chunk_ascii(chunks[i], m.vocab());
      }
    }
    if (gen_out.empty())
      out << text;
    else
      write_text_artifact(gen_out, text, provenance_of(*gen_cmd, gen_seed));
  });

  // encode
  std::string enc_model, enc_manifest, enc_out;
  auto* enc_cmd = app.add_subcommand("encode", "Export latent means and hard labels of a corpus as CSV");
  enc_cmd->add_option("--model", enc_model, "Checkpoint")->required();
  enc_cmd->add_option("--manifest", enc_manifest, "Dataset manifest")->required();
  enc_cmd->add_option("--out", enc_out, "CSV path")->required();
  commands.emplace_back(enc_cmd, [&] {
    const LoadedModel m = load_model(enc_model);
    const ModelData md = corpus_for(m, enc_manifest);
    const auto encoded = m.encode(md.data);
    write_text_artifact(enc_out, export_latents_csv(encoded, md.chunks), provenance_of(*enc_cmd, 0));
    out << "encoded " << encoded.size() << " chunks -> " << enc_out << "\n";
  });

  // eval-cluster
  std::string cl_model, cl_manifest, cl_out, cl_csv;
  auto* cl_cmd = app.add_subcommand("eval-cluster", "Balanced clustering accuracy against level types");
  cl_cmd->add_option("--model", cl_model, "Checkpoint")->required();
  cl_cmd->add_option("--manifest", cl_manifest, "Dataset manifest with level types")->required();
  cl_cmd->add_option("--out", cl_out, "Report (JSON)");
  cl_cmd->add_option("--csv", cl_csv, "Per-type table (CSV)");
  commands.emplace_back(cl_cmd, [&] {
    const LoadedModel m = load_model(cl_model);
    const ModelData md = corpus_for(m, cl_manifest);
    const auto encoded = m.encode(md.data);
    std::vector<std::size_t> labels;
    for (const auto& e : encoded) labels.push_back(e.label);
    const auto types = labels_of(md.chunks);
    const ClusterReport r = clustering_accuracy(labels, types, m.k());
    const Provenance prov = provenance_of(*cl_cmd, 0);
    out << m.format << " k=" << r.k << " balanced accuracy " << fixed(r.balanced_accuracy) << " (overall "
        << fixed(r.overall_accuracy) << ")\n";
    std::string table = "type,component,chunks,accuracy\n";
    for (std::size_t t = 0; t < r.types.size(); ++t) {
      std::size_t n = 0;
      for (const auto& row : r.confusion) n += row[t];
      const std::string comp = r.assignment[t] ? std::to_string(*r.assignment[t]) : "";
      out << "  " << r.types[t] << " -> " << (comp.empty() ? "-" : comp) << ": " << fixed(r.per_type_accuracy[t])
          << "\n";
      table += csv_field(r.types[t]) + "," + comp + "," + std::to_string(n) + "," + fmt(r.per_type_accuracy[t]) + "\n";
    }
    if (!cl_csv.empty()) write_text_artifact(cl_csv, table, prov);
    if (!cl_out.empty()) {
      json assignment = json::array();
      for (const auto& a : r.assignment) assignment.push_back(a ? json(*a) : json());
      write_json_artifact(cl_out,
                          {{"model_format", m.format},
                           {"k", r.k},
                           {"types", r.types},
                           {"confusion", r.confusion},
                           {"assignment", assignment},
                           {"per_type_accuracy", r.per_type_accuracy},
                           {"balanced_accuracy", r.balanced_accuracy},
                           {"overall_accuracy", r.overall_accuracy}},
                          prov);
    }
  });

  // eval-disentangle
  std::string dis_model, dis_out, dis_csv;
  std::uint64_t dis_seed = 42;
  ProbeFlags dis_probe;
  auto* dis_cmd = app.add_subcommand("eval-disentangle", "Probe-classifier disentanglement of generated chunks");
  dis_cmd->add_option("--model", dis_model, "Checkpoint")->required();
  dis_cmd->add_option("--seed", dis_seed, "Random seed");
  dis_cmd->add_option("--out", dis_out, "Report (JSON)");
  dis_cmd->add_option("--csv", dis_csv, "Per-component accuracy (CSV)");
  dis_probe.add(dis_cmd);
  commands.emplace_back(dis_cmd, [&] {
    const LoadedModel m = load_model(dis_model);
    Rng rng(dis_seed);
    ProbeConfig probe = dis_probe.probe;
    probe.seed = dis_seed;
    const auto r = disentanglement(m.generator(), m.k(), m.vocab(), rng, probe);
    const Provenance prov = provenance_of(*dis_cmd, dis_seed);
    out << m.format << " k=" << r.k << " p70 " << fixed(r.p70, 3) << " p80 " << fixed(r.p80, 3) << " p90 "
        << fixed(r.p90, 3) << " (probe stopped after " << r.probe_epochs << " epochs)\n";
    if (!dis_csv.empty()) {
      std::string table = "component,accuracy\n";
      for (std::size_t c = 0; c < r.k; ++c) table += std::to_string(c) + "," + fmt(r.component_accuracy[c]) + "\n";
      write_text_artifact(dis_csv, table, prov);
    }
    if (!dis_out.empty()) {
      json body = disentanglement_json(r);
      body["model_format"] = m.format;
      write_json_artifact(dis_out, body, prov);
    }
  });

  // eval-playability
  std::string pl_model, pl_manifest, pl_out, pl_csv;
  std::uint64_t pl_seed = 42;
  std::size_t pl_budget = 10000;
  auto* pl_cmd = app.add_subcommand("eval-playability", "Fraction of generated chunks the path search can cross");
  pl_cmd->add_option("--model", pl_model, "Checkpoint")->required();
  pl_cmd->add_option("--seed", pl_seed, "Random seed");
  pl_cmd->add_option("--budget", pl_budget, "Total chunks; each component gets floor(budget / k)");
  pl_cmd->add_option("--manifest", pl_manifest, "Manifest supplying solidity classes");
  pl_cmd->add_option("--out", pl_out, "Report (JSON)");
  pl_cmd->add_option("--csv", pl_csv, "Per-component table (CSV)");
  commands.emplace_back(pl_cmd, [&] {
    const LoadedModel m = load_model(pl_model);
    const PlayabilityRules rules = rules_for(m.vocab().game(), pl_manifest);
    Rng rng(pl_seed);
    const auto r = playability_suite(m.generator(), m.k(), m.vocab(), rules, rng, pl_budget);
    const Provenance prov = provenance_of(*pl_cmd, pl_seed);
    out << m.format << " k=" << r.k << ": " << r.playable << "/" << r.total << " playable (" << fixed(r.fraction)
        << ")\n";
    std::string table = "component,sampled,playable,fraction\n";
    for (std::size_t c = 0; c < r.k; ++c)
      table += std::to_string(c) + "," + std::to_string(r.per_component) + "," +
               std::to_string(r.playable_per_component[c]) + "," +
               fmt(static_cast<double>(r.playable_per_component[c]) / static_cast<double>(r.per_component)) + "\n";
    if (!pl_csv.empty()) write_text_artifact(pl_csv, table, prov);
    if (!pl_out.empty())
      write_json_artifact(pl_out,
                          {{"model_format", m.format},
                           {"game", rules.game},
                           {"k", r.k},
                           {"per_component", r.per_component},
                           {"playable_per_component", r.playable_per_component},
                           {"total", r.total},
                           {"playable", r.playable},
                           {"fraction", r.fraction},
                           {"max_jump_height", rules.max_jump_height},
                           {"max_jump_span", rules.max_jump_span}},
                          prov);
  });

  // densities
  std::string den_model, den_manifest, den_out, den_json, den_source = "generated";
  std::size_t den_n = 1000;
  std::uint64_t den_seed = 42;
  auto* den_cmd = app.add_subcommand("densities", "Per-component mean tile densities");
  den_cmd->add_option("--model", den_model, "Checkpoint")->required();
  den_cmd->add_option("--source", den_source, "generated: sample each component; assigned: corpus chunks by label")
      ->check(CLI::IsMember({"generated", "assigned"}));
  den_cmd->add_option("--manifest", den_manifest, "Dataset manifest (for --source assigned)");
  den_cmd->add_option("--n", den_n, "Chunks per component when generating");
  den_cmd->add_option("--seed", den_seed, "Random seed");
  den_cmd->add_option("--out", den_out, "Normalized density matrix (CSV)")->required();
  den_cmd->add_option("--json", den_json, "Raw and normalized matrices (JSON)");
  commands.emplace_back(den_cmd, [&] {
    const LoadedModel m = load_model(den_model);
    std::vector<std::vector<Chunk>> groups(m.k());
    if (den_source == "generated") {
      Rng rng(den_seed);
      const auto gen = m.generator();
      for (std::size_t c = 0; c < m.k(); ++c) {
        Rng stream = rng.split();
        groups[c] = gen(c, den_n, stream);
      }
    } else {
      if (den_manifest.empty()) throw Error(ErrorCode::UsageError, "--source assigned needs --manifest");
      const ModelData md = corpus_for(m, den_manifest);
      const auto encoded = m.encode(md.data);
      for (std::size_t i = 0; i < encoded.size(); ++i) groups[encoded[i].label].push_back(md.chunks[i]);
    }
    const TileDensityMatrix d = tile_densities(groups, m.vocab());
    const Provenance prov = provenance_of(*den_cmd, den_seed);
    write_text_artifact(den_out, density_csv(d), prov);
    if (!den_json.empty()) {
      auto rows = [](const Matrix& x) {
        json j = json::array();
        for (std::size_t r = 0; r < x.rows; ++r) j.push_back(std::vector<double>(x.row(r).begin(), x.row(r).end()));
        return j;
      };
      write_json_artifact(den_json,
                          {{"tiles", d.tiles},
                           {"source", den_source},
                           {"chunks_per_component", d.chunks_per_component},
                           {"mean_counts", rows(d.mean_counts)},
                           {"normalized", rows(d.normalized)}},
                          prov);
    }
    out << "densities for " << d.components() << " components over tiles '" << d.tiles << "' -> " << den_out << "\n";
  });

  // chart
  std::string chart_in, chart_dir, chart_prefix = "component_";
  auto* chart_cmd = app.add_subcommand("chart", "One radial bar chart (SVG) per component from a density CSV");
  chart_cmd->add_option("--densities", chart_in, "Density CSV written by 'densities'")->required();
  chart_cmd->add_option("--out-dir", chart_dir, "Output directory")->required();
  chart_cmd->add_option("--prefix", chart_prefix, "File name prefix");
  commands.emplace_back(chart_cmd, [&] {
    const TileDensityMatrix d = parse_density_csv(read_text_file(chart_in, ErrorCode::EmptyMatrix));
    const auto svgs = radial_charts(d);
    const Provenance prov = provenance_of(*chart_cmd, 0);
    const std::string meta = "  <metadata>" + xml_escape(provenance_json(prov).dump()) + "</metadata>\n";
    for (std::size_t c = 0; c < svgs.size(); ++c) {
      std::string svg = svgs[c];
      const auto pos = svg.find(">\n", svg.find("<svg"));
      svg.insert(pos + 2, meta);
      write_text_file(fs::path(chart_dir) / (chart_prefix + std::to_string(c) + ".svg"), svg);
    }
    out << "wrote " << svgs.size() << " charts to " << chart_dir << "\n";
  });

  // sweep
  ModelFlags sweep_flags;
  std::string sweep_ks = "2,4,6,8,10,15,20,30,40,50", sweep_seeds = "42", sweep_families = "gmvae,vae-gmm";
  std::string sweep_out, sweep_json;
  ProbeFlags sweep_probe;
  GmmOptions sweep_gmm;
  auto* sweep_cmd = app.add_subcommand("sweep", "Disentanglement proportions over component counts and model families");
  sweep_flags.add(sweep_cmd, false, true);
  sweep_cmd->add_option("--ks", sweep_ks, "Comma-separated component counts");
  sweep_cmd->add_option("--seeds", sweep_seeds, "Comma-separated seeds; proportions are averaged over them");
  sweep_cmd->add_option("--families", sweep_families, "Comma-separated subset of gmvae,vae-gmm");
  sweep_cmd->add_option("--out", sweep_out, "Aggregated CSV")->required();
  sweep_cmd->add_option("--json", sweep_json, "Per-seed details (JSON)");
  sweep_probe.add(sweep_cmd);
  gmm_options_add(sweep_cmd, sweep_gmm);
  commands.emplace_back(sweep_cmd, [&] {
    const auto ks = parse_list(sweep_ks, "--ks");
    const auto seeds = parse_list(sweep_seeds, "--seeds");
    std::vector<std::string> families;
    {
      std::stringstream ss(sweep_families);
      std::string f;
      while (std::getline(ss, f, ','))
        if (!f.empty()) {
          if (f != "gmvae" && f != "vae-gmm") throw Error(ErrorCode::UsageError, "unknown family '" + f + "'");
          families.push_back(f);
        }
      if (families.empty()) throw Error(ErrorCode::UsageError, "--families list is empty");
    }
    for (std::size_t k : ks)
      if (k < 2) throw Error(ErrorCode::UsageError, "every k in --ks must be at least 2");
    const Corpus corpus = load_corpus(load_manifest(sweep_flags.manifest));
    const Matrix data = encode_all(corpus.chunks, corpus.vocab);
    const auto labels = labels_of(corpus.chunks);
    const Provenance prov = provenance_of(*sweep_cmd, seeds.front());

    // (family, k) -> per-seed reports
    std::map<std::pair<std::string, std::size_t>, std::vector<DisentanglementReport>> results;
    for (std::size_t seed : seeds) {
      ModelFlags f = sweep_flags;
      f.seed = seed;
      ProbeConfig probe = sweep_probe.probe;
      probe.seed = seed;
      for (const auto& family : families) {
        if (family == "vae-gmm") {
          VaeModel vae = build_vae(f.config(corpus.input_dim(), 2), corpus.vocab);
          vae = train_vae(std::move(vae), data, labels, f.progress(err, "vae seed " + std::to_string(seed)));
          for (std::size_t k : ks) {
            const VaeGmm model = fit_vae_gmm(vae, data, k, seed, sweep_gmm);
            Rng rng(seed);
            results[{family, k}].push_back(disentanglement(make_generator(model), k, corpus.vocab, rng, probe));
            err << "vae-gmm k=" << k << " seed " << seed << " p80 " << fixed(results[{family, k}].back().p80, 3) << "\n";
          }
        } else {
          for (std::size_t k : ks) {
            GmvaeModel model = build_model(f.config(corpus.input_dim(), k), corpus.vocab);
            model = train(std::move(model), data, labels,
                          f.progress(err, "gmvae k=" + std::to_string(k) + " seed " + std::to_string(seed)));
            Rng rng(seed);
            results[{family, k}].push_back(disentanglement(make_generator(model), k, corpus.vocab, rng, probe));
            err << "gmvae k=" << k << " seed " << seed << " p80 " << fixed(results[{family, k}].back().p80, 3) << "\n";
          }
        }
      }
    }

    std::string table = "family,k,p70,p80,p90\n";
    json rows = json::array();
    for (const auto& family : families)
      for (std::size_t k : ks) {
        const auto& reps = results.at({family, k});
        double p70 = 0, p80 = 0, p90 = 0;
        json per_seed = json::array();
        for (std::size_t i = 0; i < reps.size(); ++i) {
          p70 += reps[i].p70;
          p80 += reps[i].p80;
          p90 += reps[i].p90;
          json r = disentanglement_json(reps[i]);
          r["seed"] = seeds[i];
          per_seed.push_back(r);
        }
        const double n = static_cast<double>(reps.size());
        table += family + "," + std::to_string(k) + "," + fmt(p70 / n) + "," + fmt(p80 / n) + "," + fmt(p90 / n) + "\n";
        rows.push_back({{"family", family}, {"k", k}, {"p70", p70 / n}, {"p80", p80 / n}, {"p90", p90 / n},
                        {"per_seed", per_seed}});
        out << family << " k=" << k << " p70 " << fixed(p70 / n, 3) << " p80 " << fixed(p80 / n, 3) << " p90 "
            << fixed(p90 / n, 3) << "\n";
      }
    write_text_artifact(sweep_out, table, prov);
    if (!sweep_json.empty()) write_json_artifact(sweep_json, {{"rows", rows}}, prov);
  });

  auto report = [&](std::string_view name, std::string_view category, const std::string& message) {
    err << json{{"error", name}, {"category", category}, {"message", message}}.dump() << "\n";
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto& [sub, handler] : commands)
      if (sub->parsed()) handler();
  } catch (const Error& e) {
    static constexpr std::string_view names[] = {"usage", "data", "numeric"};
    report(error_name(e.code()), names[static_cast<int>(e.category())], e.what());
    return exit_code(e.category());
  } catch (const json::exception& e) {
    report("MalformedJson", "data", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    report("Failure", "data", e.what());
    return kExitData;
  }
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"gmlevel"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace gmlevel::cli
