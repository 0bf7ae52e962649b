#include "gmlevel/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gmlevel/error.hpp"

namespace gmlevel {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::CheckpointError, what); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from(const json& j, const std::string& what) {
  if (!j.is_array()) fail(what + ": expected an array of rows");
  Matrix m;
  m.rows = j.size();
  m.cols = m.rows ? j.front().size() : 0;
  m.data.reserve(m.rows * m.cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != m.cols) fail(what + ": ragged matrix");
    for (const auto& v : row) {
      if (!v.is_number()) fail(what + ": non-numeric entry");
      m.data.push_back(v.get<double>());
    }
  }
  return m;
}

json net_json(const DenseNet& net) {
  json layers = json::array();
  for (const auto& l : net.layers())
    layers.push_back({{"activation", std::string(activation_name(l.activation))},
                      {"weight", matrix_json(l.weight)},
                      {"bias", l.bias}});
  return layers;
}

DenseNet net_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) fail(what + ": expected a non-empty layer list");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& lj = j[i];
    const std::string where = what + " layer " + std::to_string(i);
    if (!lj.contains("weight") || !lj.contains("bias") || !lj.contains("activation"))
      fail(where + ": missing weight, bias or activation");
    DenseLayer l;
    l.weight = matrix_from(lj["weight"], where);
    l.bias = lj["bias"].get<std::vector<double>>();
    l.activation = parse_activation(lj["activation"].get<std::string>());
    if (l.bias.size() != l.weight.rows) fail(where + ": bias length differs from output size");
    if (!layers.empty() && layers.back().out() != l.in())
      fail(where + ": input size " + std::to_string(l.in()) + " does not follow " +
           std::to_string(layers.back().out()));
    layers.push_back(std::move(l));
  }
  return DenseNet(std::move(layers));
}

void expect_shape(const DenseNet& net, std::size_t in, std::size_t out, const std::string& what) {
  if (net.input_size() != in || net.output_size() != out)
    fail(what + " maps " + std::to_string(net.input_size()) + " -> " +
         std::to_string(net.output_size()) + ", expected " + std::to_string(in) + " -> " +
         std::to_string(out));
}

json encoder_json(const GaussianEncoder& e) {
  return {{"trunk", net_json(e.trunk)}, {"mean_head", net_json(e.mean_head)},
          {"var_head", net_json(e.var_head)}};
}

GaussianEncoder encoder_from(const json& j) {
  GaussianEncoder e;
  e.trunk = net_from(j.at("trunk"), "encoder trunk");
  e.mean_head = net_from(j.at("mean_head"), "encoder mean head");
  e.var_head = net_from(j.at("var_head"), "encoder variance head");
  return e;
}

json config_json(const GmvaeConfig& c) {
  return {{"input_dim", c.input_dim},
          {"components", c.components},
          {"latent_dim", c.latent_dim},
          {"hidden_width", c.hidden_width},
          {"hidden_depth", c.hidden_depth},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"kl_weight", c.kl_weight},
          {"recon_weight", c.recon_weight},
          {"temperature",
           {{"start", c.temperature.start},
            {"min", c.temperature.min},
            {"decay", c.temperature.decay},
            {"hard_from", c.temperature.hard_from}}},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"sampler", std::string(sampler_name(c.sampler))}};
}

GmvaeConfig config_from(const json& j) {
  GmvaeConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.components = j.at("components").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.hidden_depth = j.at("hidden_depth").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<long>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.kl_weight = j.at("kl_weight").get<double>();
  c.recon_weight = j.at("recon_weight").get<double>();
  const auto& t = j.at("temperature");
  c.temperature.start = t.at("start").get<double>();
  c.temperature.min = t.at("min").get<double>();
  c.temperature.decay = t.at("decay").get<double>();
  c.temperature.hard_from = t.at("hard_from").get<long>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<long>();
  c.sampler = parse_sampler(j.at("sampler").get<std::string>());
  return c;
}

json vocab_json(const TileVocab& v) {
  return {{"game", v.game()}, {"tiles", v.chars()}, {"background", std::string(1, v.background_char())}};
}

TileVocab vocab_from(const json& j) {
  const auto bg = j.at("background").get<std::string>();
  if (bg.size() != 1) fail("vocab background must be one character");
  return TileVocab(j.at("game").get<std::string>(), j.at("tiles").get<std::string>(), bg[0]);
}

json history_json(const TrainingHistory& h) {
  json rows = json::array();
  for (const auto& e : h.epochs)
    rows.push_back({{"epoch", e.epoch},
                    {"recon", e.recon_loss},
                    {"kl", e.kl_loss},
                    {"total", e.total_loss},
                    {"temperature", e.temperature},
                    {"hard", e.hard}});
  return rows;
}

TrainingHistory history_from(const json& j) {
  TrainingHistory h;
  for (const auto& e : j) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<long>();
    r.recon_loss = e.at("recon").get<double>();
    r.kl_loss = e.at("kl").get<double>();
    r.total_loss = e.at("total").get<double>();
    r.temperature = e.at("temperature").get<double>();
    r.hard = e.at("hard").get<bool>();
    h.epochs.push_back(r);
  }
  return h;
}

json provenance_json(const Provenance& p) {
  return {{"command", p.command}, {"flags", p.flags}, {"seed", p.seed}, {"version", p.version}};
}

Provenance provenance_from(const json& j) {
  Provenance p;
  if (!j.is_object()) return p;
  p.command = j.value("command", "");
  if (j.contains("flags")) p.flags = j["flags"].get<std::map<std::string, std::string>>();
  p.seed = j.value("seed", std::uint64_t{0});
  p.version = j.value("version", "");
  return p;
}

json header(std::string_view format, const TileVocab& vocab, const GmvaeConfig& config,
            const Provenance& provenance) {
  json j;
  j["format"] = format;
  j["format_version"] = kCheckpointFormatVersion;
  j["game"] = vocab.game();
  j["config"] = config_json(config);
  j["vocab"] = vocab_json(vocab);
  j["provenance"] = provenance_json(provenance);
  return j;
}

json parse_checked(std::string_view text, std::string_view format) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("format")) fail("missing format tag");
  if (j["format"] != format)
    fail("expected a " + std::string(format) + " checkpoint, found " + j["format"].dump());
  if (j.value("format_version", 0) != kCheckpointFormatVersion)
    fail("unsupported format_version " + j.value("format_version", json()).dump());
  return j;
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(std::string("malformed checkpoint: ") + e.what());
  }
}

void check_encoder_decoder(const GaussianEncoder& enc, const DenseNet& dec, std::size_t enc_in,
                           const GmvaeConfig& c) {
  expect_shape(enc.trunk, enc_in, c.hidden_width, "encoder trunk");
  expect_shape(enc.mean_head, c.hidden_width, c.latent_dim, "encoder mean head");
  expect_shape(enc.var_head, c.hidden_width, c.latent_dim, "encoder variance head");
  expect_shape(dec, c.latent_dim, c.input_dim, "decoder");
}

}  // namespace

std::string checkpoint_format(std::string_view json_text) {
  return guarded([&] {
    const json j = json::parse(json_text);
    if (!j.is_object() || !j.contains("format")) fail("missing format tag");
    return j["format"].get<std::string>();
  });
}

std::string save_gmvae(const GmvaeModel& m, const Provenance& provenance) {
  json j = header("gmvae", m.vocab, m.config, provenance);
  j["networks"] = {{"label", net_json(m.label_net)},
                   {"prior_mean", net_json(m.prior_mean_net)},
                   {"prior_var", net_json(m.prior_var_net)},
                   {"encoder", encoder_json(m.encoder)},
                   {"decoder", net_json(m.decoder)}};
  j["history"] = history_json(m.history);
  return j.dump(1) + "\n";
}

GmvaeModel load_gmvae(std::string_view text, Provenance* provenance) {
  const json j = parse_checked(text, "gmvae");
  return guarded([&] {
    GmvaeModel m;
    m.config = config_from(j.at("config"));
    m.vocab = vocab_from(j.at("vocab"));
    const auto& n = j.at("networks");
    m.label_net = net_from(n.at("label"), "label network");
    m.prior_mean_net = net_from(n.at("prior_mean"), "prior mean network");
    m.prior_var_net = net_from(n.at("prior_var"), "prior variance network");
    m.encoder = encoder_from(n.at("encoder"));
    m.decoder = net_from(n.at("decoder"), "decoder");
    m.history = history_from(j.at("history"));
    const auto& c = m.config;
    if (c.input_dim != kChunkCells * m.vocab.size())
      fail("input_dim " + std::to_string(c.input_dim) + " does not match the vocabulary");
    expect_shape(m.label_net, c.input_dim, c.components, "label network");
    expect_shape(m.prior_mean_net, c.components, c.latent_dim, "prior mean network");
    expect_shape(m.prior_var_net, c.components, c.latent_dim, "prior variance network");
    check_encoder_decoder(m.encoder, m.decoder, c.input_dim + c.components, c);
    if (provenance) *provenance = provenance_from(j.value("provenance", json()));
    return m;
  });
}

std::string save_vae_gmm(const VaeGmm& m, const Provenance& provenance) {
  GmvaeConfig cfg = m.vae.config;
  cfg.components = m.components();
  json j = header("vae-gmm", m.vae.vocab, cfg, provenance);
  j["networks"] = {{"encoder", encoder_json(m.vae.encoder)}, {"decoder", net_json(m.vae.decoder)}};
  j["history"] = history_json(m.vae.history);
  j["pca"] = {{"mean", m.pca.mean},
              {"axes", matrix_json(m.pca.axes)},
              {"explained_variance", m.pca.explained_variance},
              {"retained", m.pca.retained},
              {"variance_threshold", m.pca.variance_threshold}};
  json comps = json::array();
  for (const auto& c : m.gmm.components)
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"covariance", matrix_json(c.covariance)}});
  j["gmm"] = {{"components", comps},
              {"log_likelihood_trace", m.gmm.log_likelihood_trace},
              {"log_likelihood", m.gmm.log_likelihood},
              {"seed", m.gmm.seed},
              {"iterations", m.gmm.iterations}};
  return j.dump(1) + "\n";
}

VaeGmm load_vae_gmm(std::string_view text, Provenance* provenance) {
  const json j = parse_checked(text, "vae-gmm");
  return guarded([&] {
    VaeGmm m;
    m.vae.config = config_from(j.at("config"));
    m.vae.vocab = vocab_from(j.at("vocab"));
    const auto& n = j.at("networks");
    m.vae.encoder = encoder_from(n.at("encoder"));
    m.vae.decoder = net_from(n.at("decoder"), "decoder");
    m.vae.history = history_from(j.at("history"));
    const auto& c = m.vae.config;
    if (c.input_dim != kChunkCells * m.vae.vocab.size())
      fail("input_dim " + std::to_string(c.input_dim) + " does not match the vocabulary");
    check_encoder_decoder(m.vae.encoder, m.vae.decoder, c.input_dim, c);

    const auto& p = j.at("pca");
    m.pca.mean = p.at("mean").get<std::vector<double>>();
    m.pca.axes = matrix_from(p.at("axes"), "pca axes");
    m.pca.explained_variance = p.at("explained_variance").get<std::vector<double>>();
    m.pca.retained = p.at("retained").get<std::size_t>();
    m.pca.variance_threshold = p.at("variance_threshold").get<double>();
    if (m.pca.mean.size() != c.latent_dim || m.pca.axes.cols != c.latent_dim ||
        m.pca.retained == 0 || m.pca.retained > m.pca.axes.rows)
      fail("pca block inconsistent with the latent size");

    const auto& g = j.at("gmm");
    for (const auto& cj : g.at("components")) {
      GmmComponent comp;
      comp.weight = cj.at("weight").get<double>();
      comp.mean = cj.at("mean").get<std::vector<double>>();
      comp.covariance = matrix_from(cj.at("covariance"), "gmm covariance");
      if (comp.mean.size() != m.pca.retained || comp.covariance.rows != m.pca.retained ||
          comp.covariance.cols != m.pca.retained)
        fail("gmm component dimension differs from the retained pca axes");
      m.gmm.components.push_back(std::move(comp));
    }
    if (m.gmm.components.size() != c.components) fail("gmm component count differs from config");
    m.gmm.log_likelihood_trace = g.at("log_likelihood_trace").get<std::vector<double>>();
    m.gmm.log_likelihood = g.at("log_likelihood").get<double>();
    m.gmm.seed = g.at("seed").get<std::uint64_t>();
    m.gmm.iterations = g.at("iterations").get<std::size_t>();
    if (provenance) *provenance = provenance_from(j.value("provenance", json()));
    return m;
  });
}

std::string read_text_file(const std::filesystem::path& path, ErrorCode on_error) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(on_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::UsageError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::UsageError, "write failed for " + path.string());
}

}  // namespace gmlevel
