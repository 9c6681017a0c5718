#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "ldawa/divergence.hpp"
#include "ldawa/params.hpp"

namespace ldawa {

/// What one client uploads after local training.
struct ClientUpdate {
  ClientId client_id = 0;
  ParamSet params;
  std::size_t num_samples = 1;
  double train_loss = 0.0;  // mean loss over the final local epoch
};

void validate_update(const ClientUpdate& u);

enum class Strategy {
  kFedAvg,
  kFairAvg,
  kLoss,
  kMDawa,
  kLDawa,
  kLDawaFedAvg,
  kLDawaLoss,
  kLDawaFedU,
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
std::span<const Strategy> all_strategies();

/// True for the strategies that scale client layers by angular divergence.
bool is_divergence_aware(Strategy s);
/// True when the strategy reads num_samples / train_loss from the updates.
bool needs_sample_counts(Strategy s);
bool needs_losses(Strategy s);

struct AggregationSpec {
  Strategy strategy = Strategy::kFedAvg;
  std::size_t warmup_rounds = 0;  // rounds [0, warmup_rounds) use FedAvg
  double fedu_threshold = 0.5;    // consumed by the engine's client policy
  // Divide each divergence-weighted layer by the sum of its effective
  // coefficients. Off by default; the divergence rules divide by K only.
  bool renormalize = false;
};

/// The strategy actually applied at `round`, after warm-up.
Strategy effective_strategy(const AggregationSpec& spec, std::size_t round);

/// beta_k = n_k / sum_j n_j.
std::vector<double> coeffs_fedavg(std::span<const ClientUpdate> updates);
/// beta_k = exp(-L_k) / sum_j exp(-L_j), evaluated with max-subtraction.
std::vector<double> coeffs_loss(std::span<const ClientUpdate> updates);
/// beta_k = 1 / K.
std::vector<double> coeffs_uniform(std::size_t k);

/// Layer l of the result is sum_k base_coeffs[k] * deltas[k][l] * (layer l of client k).
/// This is the single kernel behind every divergence-aware rule; passing a
/// table of ones removes the divergence term.
ParamSet combine_layerwise(std::span<const ClientUpdate> updates, std::span<const double> base_coeffs,
                           const LayerCoeffTable& deltas);

/// Whole-model divergence weighting: (1/K) sum_k delta_k w_k.
ParamSet aggregate_mdawa(const ParamSet& global, std::span<const ClientUpdate> updates);

/// Layer-wise divergence weighting: layer l = (1/K) sum_k delta_k^(l) w_k^(l).
ParamSet aggregate_ldawa(const ParamSet& global, std::span<const ClientUpdate> updates);

/// Layer-wise divergence weighting on top of arbitrary base coefficients
/// (sample-count or loss based).
ParamSet aggregate_weighted_ldawa(const ParamSet& global, std::span<const ClientUpdate> updates,
                                  std::span<const double> base_coeffs);

struct AggregationResult {
  ParamSet params;
  std::vector<DivergenceReport> reports;  // ascending client id
  Strategy effective = Strategy::kFedAvg;
};

/// Dispatches on spec.strategy (FedAvg while round < warmup_rounds).
/// Updates are processed in ascending client id regardless of input order,
/// so the output is bit-identical under any permutation of `updates`.
AggregationResult aggregate(const AggregationSpec& spec, std::size_t round, const ParamSet& global,
                            std::span<const ClientUpdate> updates);

}  // namespace ldawa
