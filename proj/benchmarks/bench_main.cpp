#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "fedssl/data/partition.hpp"
#include "fedssl/federation/protocol.hpp"
#include "fedssl/federation/training.hpp"
#include "fedssl/nn/network.hpp"
#include "fedssl/ssl/pseudo_label.hpp"

using namespace fedssl;

namespace {

nn::Batch random_batch(std::size_t rows, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
  nn::Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = normal(rng);
  for (std::size_t r = 0; r < rows; ++r) b.labels.push_back(label(rng));
  return b;
}

nn::ModelParams model(std::size_t dim, std::size_t hidden, std::size_t classes) {
  return federation::initial_model(dim, classes, std::vector<std::size_t>{hidden}, 3);
}

void BM_Forward(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto m = model(dim, 128, 10);
  const auto b = random_batch(16, dim, 10, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward_batch(m, b.inputs));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128)->Arg(784);

void BM_Backward(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto m = model(dim, 128, 10);
  const auto b = random_batch(16, dim, 10, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::backward(m, b));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Backward)->Arg(32)->Arg(128)->Arg(784);

void BM_DecideAll(benchmark::State& state) {
  const auto g = model(32, 128, 10);
  const auto l = federation::initial_model(32, 10, std::vector<std::size_t>{128}, 4);
  const auto b = random_batch(256, 32, 10, 3);
  ssl::SslConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ssl::decide_all(g, l, b.inputs, cfg));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_DecideAll);

void BM_ClientRound(benchmark::State& state) {
  const auto pool = data::generate_synthetic(10, 32, 60, 1.0, 1);
  data::PartitionSpec spec;
  spec.clients = 4;
  spec.seed = 1;
  const auto clients = data::build_clients(pool, spec);
  const auto global = federation::initial_model(32, 10, std::vector<std::size_t>{128}, 1);
  federation::MethodConfig cfg;
  cfg.method = static_cast<federation::Method>(state.range(0));
  if (cfg.uses_proximal()) cfg.prox_mu = 0.01;
  const data::Augmenter aug{data::AugmentConfig{}};
  std::size_t round = 0;
  for (auto _ : state) benchmark::DoNotOptimize(federation::client_round(global, clients[0], cfg, aug, 1, round++));
  state.SetLabel(std::string(federation::to_string(cfg.method)));
}
BENCHMARK(BM_ClientRound)
    ->Arg(static_cast<int>(federation::Method::FedAvgSup))
    ->Arg(static_cast<int>(federation::Method::FedAvgFixMatch))
    ->Arg(static_cast<int>(federation::Method::FedLabel));

}  // namespace

BENCHMARK_MAIN();
