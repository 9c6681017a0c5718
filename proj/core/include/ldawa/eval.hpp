#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ldawa/dataset.hpp"
#include "ldawa/divergence.hpp"
#include "ldawa/model.hpp"
#include "ldawa/params.hpp"
#include "ldawa/telemetry.hpp"

namespace ldawa {

/// Linear-probe schedule. Defaults follow the standard frozen-encoder
/// protocol: SGD with momentum 0.9, lr 0.01, batch 128, 100 epochs with the
/// learning rate multiplied by 0.1 after epochs 60 and 80.
struct EvalSpec {
  std::vector<double> label_fractions = {1.0};
  std::size_t epochs = 100;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 128;
  std::vector<std::size_t> milestones = {60, 80};
  double decay = 0.1;
  // Multiplies epochs and milestones (rounded) for quick runs: 0.2 gives 20 epochs, milestones {12, 16}.
  double epoch_scale = 1.0;
  std::size_t every = 0;  // probe every N rounds; 0 probes the final round only
  std::uint64_t seed = 0;
  MeanDeltaMode mean_delta_mode = MeanDeltaMode::kWholeModel;

  std::size_t scaled_epochs() const;
  std::vector<std::size_t> scaled_milestones() const;
};

void validate(const EvalSpec& spec);

double accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels);

/// round(fraction * N) indices, split across classes by largest remainder with
/// at least one per non-empty class, each class drawn by a seeded shuffle.
/// Throws when the total is smaller than the number of classes.
std::vector<std::size_t> stratified_subsample(const Dataset& ds, double fraction, std::uint64_t seed);

/// Trains a fresh zero-initialized linear classifier on frozen encoder
/// representations of a labelled subsample of `train` and returns its
/// last-epoch accuracy on `test`. `encoder` is only read.
double linear_probe(const ParamSet& encoder, const ModelSpec& model, const Dataset& train, const Dataset& test,
                    const EvalSpec& spec, double fraction);

/// Argmax predictions of a supervised model (encoder + head).
std::vector<std::uint32_t> predict(const ParamSet& params, const ModelSpec& model, const Dataset& ds);
double classifier_accuracy(const ParamSet& params, const ModelSpec& model, const Dataset& ds);

struct DivergenceSeries {
  std::vector<double> per_round_model;  // mu_delta per round, whole-model deltas
  std::vector<double> per_round_layer;  // mu_delta per round, layer-averaged deltas
  // Mean over the rounds each client took part in, ascending client id.
  std::vector<std::pair<ClientId, double>> per_client_mean;
};

DivergenceSeries divergence_series(std::span<const RoundRecord> history);

}  // namespace ldawa
