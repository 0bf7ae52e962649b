#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gmlevel/error.hpp"
#include "gmlevel/neuralnet.hpp"

using namespace gmlevel;

namespace {

// Scalar-loop KL between diagonal Gaussians, written independently of the
// library routine.
double kl_reference(const std::vector<double>& mq, const std::vector<double>& vq, const std::vector<double>& mp,
                    const std::vector<double>& vp) {
  double s = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double d = mq[i] - mp[i];
    s += std::log(std::sqrt(vp[i]) / std::sqrt(vq[i])) + (vq[i] + d * d) / (2.0 * vp[i]) - 0.5;
  }
  return s;
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("neuralnet") {
  TEST_CASE("activations are stable at extreme inputs") {
    CHECK(softplus(800.0) == doctest::Approx(800.0));
    CHECK(softplus(-800.0) >= 0.0);
    CHECK(std::isfinite(softplus(-800.0)));
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == doctest::Approx(1.0));
    CHECK(sigmoid(0.0) == doctest::Approx(0.5));
    CHECK(parse_activation(activation_name(Activation::Softplus)) == Activation::Softplus);
    CHECK_THROWS_AS(parse_activation("tanh"), Error);
  }

  TEST_CASE("network shapes and parameter counts") {
    Rng rng(1);
    DenseNet net = DenseNet::make({10, 7, 3}, {Activation::Relu, Activation::Linear}, rng);
    CHECK(net.input_size() == 10);
    CHECK(net.output_size() == 3);
    CHECK(net.parameter_count() == 10 * 7 + 7 + 7 * 3 + 3);
    for (const auto& l : net.layers())
      for (double b : l.bias) CHECK(b == 0.0);
    // He-uniform bound for the ReLU layer
    for (double w : net.layers()[0].weight.data) CHECK(std::abs(w) <= std::sqrt(6.0 / 10.0));
    CHECK_THROWS_AS(DenseNet::make({10, 7}, {Activation::Relu, Activation::Relu}, rng), Error);
  }

  TEST_CASE("batch and single-vector forward agree") {
    Rng rng(2);
    DenseNet net = DenseNet::make({6, 5, 4}, {Activation::Relu, Activation::Sigmoid}, rng);
    const Matrix x = random_matrix(3, 6, rng);
    const Matrix y = net.forward(x);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto yi = net.forward(x.row(i));
      for (std::size_t j = 0; j < 4; ++j) CHECK(yi[j] == doctest::Approx(y(i, j)).epsilon(1e-14));
    }
  }

  TEST_CASE("backward matches central differences for every activation") {
    Rng rng(3);
    for (Activation act : {Activation::Relu, Activation::Softplus, Activation::Sigmoid, Activation::Linear}) {
      CAPTURE(activation_name(act));
      DenseNet net = DenseNet::make({5, 8, 6, 4}, {act, Activation::Softplus, act}, rng);
      for (auto& l : net.layers())
        for (double& b : l.bias) b = 0.3 * rng.normal();
      Matrix x = random_matrix(3, 5, rng);
      const Matrix r = random_matrix(3, 4, rng);
      auto loss = [&] {
        const Matrix y = net.forward(x);
        return std::inner_product(y.data.begin(), y.data.end(), r.data.begin(), 0.0);
      };
      ForwardCache cache;
      net.forward(x, cache);
      NetGrad g = net.zero_grad();
      const Matrix dx = net.backward(cache, r, g);

      std::vector<double> params;
      net.for_each_parameter([&](double& p) { params.push_back(p); });
      std::vector<double> numeric;
      std::size_t i = 0;
      net.for_each_parameter([&](double& p) {
        (void)i;
        const double old = p, h = 1e-5;
        p = old + h;
        const double up = loss();
        p = old - h;
        const double down = loss();
        p = old;
        numeric.push_back((up - down) / (2 * h));
      });
      CHECK(relative_error(g.flat(), numeric) < 1e-4);

      const auto dx_num = finite_difference_gradient(loss, x.data);
      CHECK(relative_error(dx.data, dx_num) < 1e-4);
    }
  }

  TEST_CASE("backward without a cache is an error") {
    Rng rng(4);
    DenseNet net = DenseNet::make({2, 2}, {Activation::Linear}, rng);
    ForwardCache empty;
    NetGrad g = net.zero_grad();
    CHECK_THROWS_AS(net.backward(empty, Matrix(1, 2), g), Error);
  }

  TEST_CASE("binary cross-entropy and its gradient") {
    const std::vector<double> o{0.2, 0.9, 0.5}, t{0.0, 1.0, 1.0};
    std::vector<double> g(3);
    const double l = bce_loss(o, t, g);
    CHECK(l == doctest::Approx(-std::log(0.8) - std::log(0.9) - std::log(0.5)));
    std::vector<double> oo = o;
    const auto num = finite_difference_gradient([&] { return bce_loss(oo, t); }, oo, 1e-7);
    CHECK(relative_error(g, num) < 1e-6);
    // clamping keeps saturated outputs finite
    CHECK(std::isfinite(bce_loss(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 0.0})));
  }

  TEST_CASE("fused sigmoid head gradient equals output minus target") {
    Rng rng(5);
    DenseNet net = DenseNet::make({4, 6}, {Activation::Sigmoid}, rng);
    const Matrix x = random_matrix(2, 4, rng);
    Matrix t(2, 6);
    for (double& v : t.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    ForwardCache cache;
    const Matrix o = net.forward(x, cache);
    Matrix d_out(2, 6), d_pre(2, 6);
    for (std::size_t i = 0; i < 2; ++i) bce_loss(o.row(i), t.row(i), d_out.row(i));
    for (std::size_t i = 0; i < o.data.size(); ++i) d_pre.data[i] = o.data[i] - t.data[i];
    NetGrad g1 = net.zero_grad(), g2 = net.zero_grad();
    const Matrix dx1 = net.backward(cache, d_out, g1);
    const Matrix dx2 = net.backward_from_preact(cache, d_pre, g2);
    CHECK(relative_error(g1.flat(), g2.flat()) < 1e-9);
    CHECK(relative_error(dx1.data, dx2.data) < 1e-9);
  }

  TEST_CASE("softmax cross-entropy") {
    std::vector<double> logits{1.0, -0.5, 2.0, 0.1};
    std::vector<double> g(4);
    const double l = softmax_cross_entropy(logits, 2, g);
    const auto p = softmax(logits);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
    CHECK(l == doctest::Approx(-std::log(p[2])));
    const auto num = finite_difference_gradient([&] { return softmax_cross_entropy(logits, 2); }, logits);
    CHECK(relative_error(g, num) < 1e-7);
    const auto big = softmax(std::vector<double>{1000.0, 999.0});
    CHECK(std::isfinite(big[0]));
  }

  TEST_CASE("diagonal KL: closed form, zero at equality, gradients") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + rng.index(8);
      auto mq = random_vec(n, rng), mp = random_vec(n, rng);
      auto vq = random_vec(n, rng, 0.1, 3.0), vp = random_vec(n, rng, 0.1, 3.0);
      CHECK(kl_diag(mq, vq, mp, vp) == doctest::Approx(kl_reference(mq, vq, mp, vp)).epsilon(1e-12));
      CHECK(kl_diag(mq, vq, mq, vq) == doctest::Approx(0.0));
      CHECK(kl_diag(mq, vq, mp, vp) >= 0.0);

      std::vector<double> g1(n), g2(n), g3(n), g4(n);
      kl_diag(mq, vq, mp, vp, g1, g2, g3, g4);
      auto f = [&] { return kl_diag(mq, vq, mp, vp); };
      CHECK(relative_error(g1, finite_difference_gradient(f, mq)) < 1e-6);
      CHECK(relative_error(g2, finite_difference_gradient(f, vq, 1e-6)) < 1e-6);
      CHECK(relative_error(g3, finite_difference_gradient(f, mp)) < 1e-6);
      CHECK(relative_error(g4, finite_difference_gradient(f, vp, 1e-6)) < 1e-6);
    }
    CHECK(kl_diag(DiagGaussian{{0.0}, {1.0}}, DiagGaussian{{0.0}, {1.0}}) == 0.0);
    CHECK_THROWS_AS(kl_diag(std::vector<double>{0.0}, std::vector<double>{0.0}, std::vector<double>{0.0},
                            std::vector<double>{1.0}),
                    Error);
    CHECK_THROWS_AS(kl_diag(std::vector<double>{0.0}, std::vector<double>{1.0}, std::vector<double>{0.0},
                            std::vector<double>{-1.0}),
                    Error);
  }

  TEST_CASE("diagonal KL matches a Monte-Carlo estimate") {
    Rng rng(7);
    const DiagGaussian q{{0.3, -0.8, 1.1}, {0.5, 1.7, 0.9}};
    const DiagGaussian p{{-0.2, 0.4, 0.0}, {1.3, 0.6, 2.2}};
    auto log_density = [](const DiagGaussian& g, const std::vector<double>& z) {
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i)
        s += -0.5 * std::log(2.0 * M_PI * g.variance[i]) - (z[i] - g.mean[i]) * (z[i] - g.mean[i]) / (2.0 * g.variance[i]);
      return s;
    };
    const int n = 1000000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto s = reparam_sample(q, rng);
      acc += log_density(q, s.z) - log_density(p, s.z);
    }
    const double mc = acc / n, exact = kl_diag(q, p);
    CHECK(std::abs(mc - exact) / exact < 0.01);
  }

  TEST_CASE("reparameterization gradient") {
    Rng rng(8);
    std::vector<double> mean = random_vec(4, rng), var = random_vec(4, rng, 0.2, 2.0);
    const auto s = reparam_sample(DiagGaussian{mean, var}, rng);
    const std::vector<double> w = random_vec(4, rng);
    auto f = [&] {
      double out = 0.0;
      for (std::size_t i = 0; i < 4; ++i) out += w[i] * (mean[i] + std::sqrt(var[i]) * s.noise[i]);
      return out;
    };
    std::vector<double> dm(4), dv(4);
    reparam_backward(var, s.noise, w, dm, dv);
    CHECK(relative_error(dm, finite_difference_gradient(f, mean)) < 1e-7);
    CHECK(relative_error(dv, finite_difference_gradient(f, var, 1e-6)) < 1e-6);
  }

  TEST_CASE("Gumbel-Softmax argmax frequencies follow softmax of the logits") {
    Rng rng(9);
    const std::vector<double> logits{0.5, -1.0, 1.5, 0.0, 0.2};
    const auto p = softmax(logits);
    std::vector<double> freq(5, 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) freq[gumbel_softmax(logits, 0.7, rng, false).argmax] += 1.0 / n;
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(freq[j] - p[j]) < 0.02);
  }

  TEST_CASE("Gumbel-Softmax outputs and gradient") {
    Rng rng(10);
    std::vector<double> logits{0.3, -0.2, 0.9};
    std::vector<double> g(3);
    for (double& x : g) x = rng.gumbel();
    const auto soft = gumbel_softmax(logits, g, 0.6, false);
    CHECK(std::accumulate(soft.output.begin(), soft.output.end(), 0.0) == doctest::Approx(1.0));
    const auto hard = gumbel_softmax(logits, g, 0.6, true);
    CHECK(std::accumulate(hard.output.begin(), hard.output.end(), 0.0) == 1.0);
    CHECK(hard.output[hard.argmax] == 1.0);
    CHECK(hard.soft == soft.soft);

    const std::vector<double> w{0.7, -1.2, 0.4};
    auto f = [&] {
      const auto s = gumbel_softmax(logits, g, 0.6, false);
      return std::inner_product(w.begin(), w.end(), s.output.begin(), 0.0);
    };
    const auto analytic = gumbel_softmax_backward(soft.soft, 0.6, w);
    CHECK(relative_error(analytic, finite_difference_gradient(f, logits)) < 1e-7);
    CHECK_THROWS_AS(gumbel_softmax(logits, g, 0.0, false), Error);
  }

  TEST_CASE("Adam first step moves each parameter by about the learning rate") {
    AdamState s;
    s.learning_rate = 0.01;
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 1e-3};
    adam_step(s, p, g);
    CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-4));
    CHECK(s.step == 1);
    CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{1.0}), Error);
  }

  TEST_CASE("Adam drives a quadratic to its minimum") {
    AdamState s;
    s.learning_rate = 0.05;
    std::vector<double> p{3.0, -2.0};
    for (int i = 0; i < 2000; ++i) {
      const std::vector<double> g{2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)};
      adam_step(s, p, g);
    }
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(p[1] == doctest::Approx(-0.5).epsilon(1e-3));
  }

  TEST_CASE("relative error helper") {
    CHECK(relative_error(std::vector<double>{0.0}, std::vector<double>{0.0}) == 0.0);
    CHECK(relative_error(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) ==
          doctest::Approx(std::sqrt(2.0)));
  }
}
