#include <benchmark/benchmark.h>

#include <random>

#include "ldawa/aggregation.hpp"
#include "ldawa/divergence.hpp"

namespace {

using namespace ldawa;

ParamSet random_model(std::mt19937_64& rng, std::size_t layers, std::size_t per_layer) {
  std::normal_distribution<double> n01;
  std::vector<LayerTensor> out;
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<double> v(per_layer);
    for (auto& x : v) x = n01(rng);
    out.emplace_back("layer" + std::to_string(l), Shape{per_layer}, std::move(v));
  }
  return ParamSet(std::move(out));
}

struct Fixture {
  ParamSet global;
  std::vector<ClientUpdate> updates;
};

Fixture make_fixture(std::size_t clients, std::size_t layers, std::size_t per_layer) {
  std::mt19937_64 rng(1);
  Fixture f;
  f.global = random_model(rng, layers, per_layer);
  for (std::size_t k = 0; k < clients; ++k) {
    ClientUpdate u;
    u.client_id = k;
    u.params = random_model(rng, layers, per_layer);
    u.num_samples = 100 + k;
    u.train_loss = 1.0 + 0.01 * static_cast<double>(k);
    f.updates.push_back(std::move(u));
  }
  return f;
}

void BM_Aggregate(benchmark::State& state, Strategy s) {
  const auto f = make_fixture(static_cast<std::size_t>(state.range(0)), 8, static_cast<std::size_t>(state.range(1)));
  AggregationSpec spec;
  spec.strategy = s;
  for (auto _ : state) benchmark::DoNotOptimize(aggregate(spec, 0, f.global, f.updates));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 8 * state.range(1));
}

void BM_LayerDivergence(benchmark::State& state) {
  const auto f = make_fixture(1, 8, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(layer_divergence(f.global, f.updates[0].params, 0));
  state.SetItemsProcessed(state.iterations() * 8 * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Aggregate, fedavg, Strategy::kFedAvg)->Args({10, 1024})->Args({100, 1024})->Args({10, 65536});
BENCHMARK_CAPTURE(BM_Aggregate, mdawa, Strategy::kMDawa)->Args({10, 1024})->Args({100, 1024})->Args({10, 65536});
BENCHMARK_CAPTURE(BM_Aggregate, ldawa, Strategy::kLDawa)->Args({10, 1024})->Args({100, 1024})->Args({10, 65536});
BENCHMARK_CAPTURE(BM_Aggregate, ldawa_loss, Strategy::kLDawaLoss)->Args({10, 1024})->Args({10, 65536});
BENCHMARK(BM_LayerDivergence)->Arg(1024)->Arg(65536);
