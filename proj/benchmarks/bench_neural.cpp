#include <benchmark/benchmark.h>

#include <random>

#include "dcmab/neural.hpp"

namespace {

// Actor shape of the standard benchmark: [g, x_j] = 18 + 8 inputs, two hidden layers.
dcmab::Mlp actor(std::size_t hidden) {
  std::mt19937_64 rng(1);
  return dcmab::Mlp({{26, hidden, dcmab::Activation::kRelu},
                     {hidden, hidden, dcmab::Activation::kRelu},
                     {hidden, 1, dcmab::Activation::kTanh}},
                    rng);
}

void BM_MlpForward(benchmark::State& state) {
  const auto net = actor(300);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(26, state.range(0));
  for (auto _ : state) {
    Eigen::MatrixXd y = net.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(96);

void BM_MlpBackward(benchmark::State& state) {
  const auto net = actor(300);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(26, state.range(0));
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(1, state.range(0));
  dcmab::ForwardCache cache;
  for (auto _ : state) {
    (void)net.forward(x, &cache);
    auto grads = net.backward(cache, g);
    benchmark::DoNotOptimize(grads.input_gradient.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpBackward)->Arg(1)->Arg(96);

void BM_AdamStep(benchmark::State& state) {
  auto net = actor(300);
  dcmab::AdamOptimizer opt(net, {});
  auto grads = net.zero_gradients();
  for (auto& w : grads.weight) w.setConstant(1e-3);
  for (auto _ : state) opt.step(net, grads);
}
BENCHMARK(BM_AdamStep);

}  // namespace
