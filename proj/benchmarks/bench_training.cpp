#include <benchmark/benchmark.h>

#include "ldawa/dataset.hpp"
#include "ldawa/trainer.hpp"

namespace {

using namespace ldawa;

void BM_TrainLocal(benchmark::State& state, TrainMethod method) {
  BlobSpec b;
  b.num_classes = 8;
  b.samples_per_class = static_cast<std::size_t>(state.range(0)) / 8;
  const Dataset data = make_blobs(b);
  ModelSpec model;
  model.encoder_dims = {16, 64, 32};
  if (is_ssl(method)) {
    model.projector_dims = {32, 32};
  } else {
    model.head_classes = 8;
  }
  TrainerSpec t;
  t.method = method;
  const ParamSet init = init_params(model, 1);
  for (auto _ : state) {
    Rng rng(3);
    benchmark::DoNotOptimize(train_local(data, init, t, model, rng));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_TrainLocal, simclr, TrainMethod::kSimclr)->Arg(160)->Arg(1600);
BENCHMARK_CAPTURE(BM_TrainLocal, barlow_twins, TrainMethod::kBarlowTwins)->Arg(160)->Arg(1600);
BENCHMARK_CAPTURE(BM_TrainLocal, supervised, TrainMethod::kSupervised)->Arg(160)->Arg(1600);
