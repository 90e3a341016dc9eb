// Serial reference kernels against the OpenMP versions on arena-sized workloads.
#include <benchmark/benchmark.h>

#include <vector>

#include "amg/kernels.hpp"
#include "amg/network.hpp"

using namespace amg;
namespace K = amg::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Par>
void BM_Conv(benchmark::State& st) {
  const std::size_t batch = static_cast<std::size_t>(st.range(0));
  K::ConvGeometry g{1, 28, 28, 16, 3, 2};
  auto w = filled(g.weight_size(), 1), b = filled(g.out_c, 2), x = filled(g.in_size() * batch, 3);
  std::vector<double> y(g.out_size() * batch);
  for (auto _ : st) {
    if constexpr (Par) K::par::conv2d_forward(g, w, b, x, y, batch);
    else K::ref::conv2d_forward(g, w, b, x, y, batch);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(batch));
}

template <bool Par>
void BM_Dense(benchmark::State& st) {
  const std::size_t batch = static_cast<std::size_t>(st.range(0)), in = 1152, out = 64;
  auto w = filled(in * out, 1), b = filled(out, 2), x = filled(in * batch, 3);
  std::vector<double> y(out * batch);
  for (auto _ : st) {
    if constexpr (Par) K::par::dense_forward(w, b, x, y, batch);
    else K::ref::dense_forward(w, b, x, y, batch);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(batch));
}

template <Backend B>
void BM_ClassifierTrainStep(benchmark::State& st) {
  const std::size_t batch = static_cast<std::size_t>(st.range(0));
  Rng rng(4);
  Network net = make_classifier(1, 28, 28, 10, rng);
  Tensor x({batch, 1, 28, 28}, filled(batch * 784, 5));
  std::vector<double> go = filled(batch * 10, 6);
  for (auto _ : st) {
    ForwardCache cache;
    net.forward(x, cache, B);
    ParamGrads grads = net.zero_grads();
    net.backward(cache, go, grads, nullptr, B);
    benchmark::DoNotOptimize(grads.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(batch));
}

}  // namespace

BENCHMARK(BM_Conv<false>)->Name("conv_ref")->Arg(1)->Arg(32);
BENCHMARK(BM_Conv<true>)->Name("conv_par")->Arg(1)->Arg(32);
BENCHMARK(BM_Dense<false>)->Name("dense_ref")->Arg(1)->Arg(32);
BENCHMARK(BM_Dense<true>)->Name("dense_par")->Arg(1)->Arg(32);
BENCHMARK(BM_ClassifierTrainStep<Backend::reference>)->Name("train_step_ref")->Arg(32);
BENCHMARK(BM_ClassifierTrainStep<Backend::parallel>)->Name("train_step_par")->Arg(32);

BENCHMARK_MAIN();
