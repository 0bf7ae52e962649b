#include <doctest.h>

#include <cmath>

#include "gmlevel/baseline.hpp"
#include "gmlevel/error.hpp"
#include "gmlevel/evaluation.hpp"
#include "support.hpp"

using namespace gmlevel;

namespace {

// Cyclic Jacobi rotations; returns eigenvalues sorted descending.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

std::vector<std::vector<double>> sample_covariance(const Matrix& x) {
  const std::size_t n = x.rows, d = x.cols;
  std::vector<double> mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(i, j) / static_cast<double>(n);
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) c[a][b] += (x(i, a) - mu[a]) * (x(i, b) - mu[b]) / static_cast<double>(n - 1);
  return c;
}

struct Blobs {
  Matrix points;
  std::vector<std::size_t> truth;
};

Blobs blobs(std::size_t per, std::uint64_t seed) {
  const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  Rng rng(seed);
  Blobs b{Matrix(3 * per, 2), {}};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = c * per + i;
      b.points(r, 0) = centers[c][0] + rng.normal() * (c == 1 ? 0.5 : 1.0);
      b.points(r, 1) = centers[c][1] + rng.normal() * (c == 2 ? 1.5 : 1.0);
      b.truth.push_back(c);
    }
  return b;
}

GmvaeConfig small_vae_config() {
  GmvaeConfig c;
  c.latent_dim = 4;
  c.hidden_width = 8;
  c.hidden_depth = 2;
  c.batch_size = 8;
  c.epochs = 40;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_SUITE("baseline") {
  TEST_CASE("PCA recovers a noisy plane") {
    Rng rng(3);
    const std::vector<double> u{1, 2, 0, -1}, v{0, 1, 1, 1};
    Matrix x(400, 4);
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double a = 3 * rng.normal(), b = 2 * rng.normal();
      for (std::size_t j = 0; j < 4; ++j) x(i, j) = 5.0 + a * u[j] + b * v[j] + 1e-3 * rng.normal();
    }
    const PcaProjection pca = pca_fit(x, 0.95);
    CHECK(pca.retained == 2);
    CHECK(pca.retained_fraction() >= 0.95);

    const auto oracle = jacobi_eigenvalues(sample_covariance(x));
    REQUIRE(pca.explained_variance.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(pca.explained_variance[i] == doctest::Approx(oracle[i]).epsilon(1e-8));

    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        double dot = 0.0;
        for (std::size_t j = 0; j < 4; ++j) dot += pca.axes(a, j) * pca.axes(b, j);
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
      }

    const Matrix back = pca_reconstruct(pca, pca_project(pca, x));
    double worst = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) worst = std::max(worst, std::abs(back.data[i] - x.data[i]));
    CHECK(worst < 0.01);
    CHECK(pca_project(pca, x).cols == 2);
  }

  TEST_CASE("PCA threshold edge cases and errors") {
    Rng rng(4);
    Matrix x(50, 3);
    for (double& e : x.data) e = rng.normal();
    CHECK(pca_fit(x, 1.0).retained == 3);
    CHECK(pca_fit(x, 1e-9).retained == 1);
    CHECK_THROWS_AS(pca_fit(Matrix(1, 3)), Error);
    CHECK_THROWS_AS(pca_fit(Matrix(10, 3)), Error);  // all zero
    CHECK_THROWS_AS(pca_project(pca_fit(x), Matrix(2, 4)), Error);
  }

  TEST_CASE("GMM separates three blobs") {
    const Blobs b = blobs(200, 5);
    const GmmModel g = gmm_fit(b.points, 3, 11);
    CHECK(g.k() == 3);
    CHECK(g.dim() == 2);
    double wsum = 0.0;
    for (const auto& c : g.components) wsum += c.weight;
    CHECK(wsum == doctest::Approx(1.0));

    const auto& tr = g.log_likelihood_trace;
    REQUIRE(tr.size() >= 2);
    for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] >= tr[i - 1] - 1e-10);
    CHECK(g.log_likelihood == doctest::Approx(gmm_mean_log_likelihood(g, b.points)));

    const Matrix r = gmm_responsibilities(g, b.points);
    for (std::size_t i = 0; i < r.rows; ++i) {
      double s = 0.0;
      for (double p : r.row(i)) s += p;
      CHECK(s == doctest::Approx(1.0));
    }

    std::vector<std::optional<std::string>> labels;
    for (auto t : b.truth) labels.push_back("t" + std::to_string(t));
    const auto pred = gmm_predict(g, b.points);
    CHECK(clustering_accuracy(pred, labels, 3).balanced_accuracy >= 0.99);
  }

  TEST_CASE("single-component GMM gives the sample moments") {
    const Blobs b = blobs(100, 6);
    GmmOptions o;
    o.ridge = 1e-6;
    const GmmModel g = gmm_fit(b.points, 1, 2, o);
    const std::size_t n = b.points.rows;
    std::vector<double> mu(2, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 2; ++j) mu[j] += b.points(i, j) / static_cast<double>(n);
    for (std::size_t j = 0; j < 2; ++j) CHECK(g.components[0].mean[j] == doctest::Approx(mu[j]).epsilon(1e-10));
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (b.points(i, a) - mu[a]) * (b.points(i, c) - mu[c]);
        const double expected = s / static_cast<double>(n) + (a == c ? 1e-6 : 0.0);
        CHECK(g.components[0].covariance(a, c) == doctest::Approx(expected).epsilon(1e-9));
      }
    CHECK(g.components[0].weight == doctest::Approx(1.0));
  }

  TEST_CASE("GMM is deterministic and samples follow a component") {
    const Blobs b = blobs(80, 7);
    const GmmModel a = gmm_fit(b.points, 3, 21), c = gmm_fit(b.points, 3, 21);
    CHECK(a.log_likelihood_trace == c.log_likelihood_trace);
    CHECK(a.seed == c.seed);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.components[i].mean == c.components[i].mean);

    Rng rng(8);
    const Matrix s = gmm_sample(a, 1, 20000, rng);
    const auto& comp = a.components[1];
    for (std::size_t j = 0; j < 2; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < s.rows; ++i) m += s(i, j) / static_cast<double>(s.rows);
      CHECK(std::abs(m - comp.mean[j]) < 4 * std::sqrt(comp.covariance(j, j) / 20000.0) + 1e-9);
    }
    CHECK_THROWS_AS(gmm_sample(a, 3, 1, rng), Error);
    CHECK_THROWS_AS(gmm_fit(b.points, 0, 1), Error);
    CHECK_THROWS_AS(gmm_fit(Matrix(2, 2), 3, 1), Error);
  }

  TEST_CASE("VAE shares the GMVAE encoder and decoder shapes") {
    const TileVocab v("g", "-?EX", '-');
    GmvaeConfig c;
    const VaeModel vae = build_vae(c, v);
    c.components = 10;
    const GmvaeModel gm = build_model(c, v);
    CHECK(vae.encoder.trunk.layers()[0].in() == 1024);
    for (std::size_t i = 1; i < 3; ++i)
      CHECK(vae.encoder.trunk.layers()[i].weight.rows == gm.encoder.trunk.layers()[i].weight.rows);
    CHECK(vae.encoder.trunk.layers().size() == 3);
    CHECK(vae.encoder.mean_head.output_size() == 64);
    CHECK(vae.encoder.var_head.layers()[0].activation == Activation::Softplus);
    REQUIRE(vae.decoder.layers().size() == gm.decoder.layers().size());
    for (std::size_t i = 0; i < vae.decoder.layers().size(); ++i) {
      CHECK(vae.decoder.layers()[i].in() == gm.decoder.layers()[i].in());
      CHECK(vae.decoder.layers()[i].out() == gm.decoder.layers()[i].out());
      CHECK(vae.decoder.layers()[i].activation == gm.decoder.layers()[i].activation);
    }
  }

  TEST_CASE("VAE KL vanishes at the standard normal and gradients match") {
    const TileVocab v("g", "-X", '-');
    VaeModel m = build_vae(small_vae_config(), v);
    Rng rng(9);
    Matrix batch(3, 512);
    for (double& x : batch.data) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
    Matrix noise(3, 4);
    for (double& e : noise.data) e = rng.normal();

    VaeModel unit = m;
    for (auto& l : unit.encoder.mean_head.layers()) {
      std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    for (auto& l : unit.encoder.var_head.layers()) {
      std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), std::log(std::expm1(1.0)));
    }
    CHECK(vae_batch_loss(unit, batch, noise, nullptr).kl == doctest::Approx(0.0).epsilon(1e-9));

    VaeGrads g = VaeGrads::zeros(m);
    (void)vae_batch_loss(m, batch, noise, &g);
    const std::pair<DenseNet*, NetGrad*> nets[] = {{&m.encoder.trunk, &g.trunk},
                                                   {&m.encoder.mean_head, &g.mean_head},
                                                   {&m.encoder.var_head, &g.var_head},
                                                   {&m.decoder, &g.decoder}};
    for (const auto& [net, grad] : nets) {
      std::vector<double> num;
      net->for_each_parameter([&](double& p) {
        const double saved = p, h = 1e-6;
        p = saved + h;
        const double up = vae_batch_loss(m, batch, noise, nullptr).total;
        p = saved - h;
        const double down = vae_batch_loss(m, batch, noise, nullptr).total;
        p = saved;
        num.push_back((up - down) / (2 * h));
      });
      CHECK(relative_error(num, grad->flat()) < 1e-4);
    }
  }

  TEST_CASE("VAE training lowers the loss and the pipeline yields valid chunks") {
    const auto sc = testsupport::write_synth_corpus(testsupport::temp_dir("baseline_vae"), 1, 22, 4);
    const Corpus corpus = load_corpus(load_manifest(sc.manifest));
    const Matrix data = encode_all(corpus.chunks, corpus.vocab);
    const VaeModel vae = train_vae(build_vae(small_vae_config(), corpus.vocab), data);
    const auto& h = vae.history.epochs;
    REQUIRE(h.size() == 40);
    CHECK(h.back().total_loss < h.front().total_loss);
    const Matrix z = vae_latent_means(vae, data);
    CHECK(z.rows == data.rows);
    CHECK(z.cols == 4);

    GmmOptions o;
    o.restarts = 3;
    const VaeGmm model = fit_vae_gmm(vae, data, 3, 5, o);
    CHECK(model.components() == 3);
    CHECK(model.pca.input_dim() == 4);
    const auto pred = vae_gmm_predict(model, data);
    CHECK(pred.size() == data.rows);
    for (auto p : pred) CHECK(p < 3);
    Rng rng(6);
    const auto chunks = generate(model, 2, 4, rng);
    CHECK(chunks.size() == 4);
    for (const auto& c : chunks)
      for (auto t : c.tiles) CHECK(t < corpus.vocab.size());
    CHECK_THROWS_AS(generate(model, 3, 1, rng), Error);
  }
}
