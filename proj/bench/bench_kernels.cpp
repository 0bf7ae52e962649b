// Serial reference vs OpenMP kernels at the layer shapes used in training:
// batch 64, hidden width 512 and the SMB one-hot width 3072.

#include <benchmark/benchmark.h>

#include "gmlevel/kernels.hpp"
#include "gmlevel/neuralnet.hpp"
#include "gmlevel/random.hpp"

using namespace gmlevel;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void forward_nt(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  const Matrix x = random_matrix(batch, in, 1), w = random_matrix(out, in, 2);
  Matrix y;
  for (auto _ : state) {
    Kernel(x, w, y);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(static_cast<long>(state.iterations() * batch * in * out));
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void input_grad_nn(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  const Matrix g = random_matrix(batch, out, 3), w = random_matrix(out, in, 4);
  Matrix dx;
  for (auto _ : state) {
    Kernel(g, w, dx);
    benchmark::DoNotOptimize(dx.data.data());
  }
  state.SetItemsProcessed(static_cast<long>(state.iterations() * batch * in * out));
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void weight_grad_tn(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  const Matrix g = random_matrix(batch, out, 5), x = random_matrix(batch, in, 6);
  Matrix dw;
  for (auto _ : state) {
    Kernel(g, x, dw);
    benchmark::DoNotOptimize(dw.data.data());
  }
  state.SetItemsProcessed(static_cast<long>(state.iterations() * batch * in * out));
}

void layer_shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 3072, 512})->Args({64, 512, 512})->Args({64, 512, 3072})->Unit(benchmark::kMillisecond);
}

void dense_forward_backward(benchmark::State& state) {
  Rng rng(7);
  DenseNet net = DenseNet::make({3072, 512, 512, 512}, {Activation::Relu, Activation::Relu, Activation::Relu}, rng);
  const Matrix x = random_matrix(64, 3072, 8);
  const Matrix g = random_matrix(64, 512, 9);
  for (auto _ : state) {
    ForwardCache cache;
    net.forward(x, cache);
    NetGrad grads = net.zero_grad();
    benchmark::DoNotOptimize(net.backward(cache, g, grads).data.data());
  }
}

}  // namespace

BENCHMARK(forward_nt<kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->Apply(layer_shapes);
BENCHMARK(forward_nt<kernels::parallel::matmul_nt>)->Name("matmul_nt/parallel")->Apply(layer_shapes);
BENCHMARK(input_grad_nn<kernels::serial::matmul_nn>)->Name("matmul_nn/serial")->Apply(layer_shapes);
BENCHMARK(input_grad_nn<kernels::parallel::matmul_nn>)->Name("matmul_nn/parallel")->Apply(layer_shapes);
BENCHMARK(weight_grad_tn<kernels::serial::matmul_tn>)->Name("matmul_tn/serial")->Apply(layer_shapes);
BENCHMARK(weight_grad_tn<kernels::parallel::matmul_tn>)->Name("matmul_tn/parallel")->Apply(layer_shapes);
BENCHMARK(dense_forward_backward)->Name("encoder_trunk_step")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
