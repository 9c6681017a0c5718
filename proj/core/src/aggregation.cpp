#include "ldawa/aggregation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "ldawa/errors.hpp"

namespace ldawa {

namespace {

constexpr std::array kStrategies = {
    Strategy::kFedAvg, Strategy::kFairAvg,     Strategy::kLoss,      Strategy::kMDawa,
    Strategy::kLDawa,  Strategy::kLDawaFedAvg, Strategy::kLDawaLoss, Strategy::kLDawaFedU,
};

void require_updates(std::span<const ClientUpdate> updates, const char* op) {
  if (updates.empty()) throw ValidationError(std::string(op) + ": no client updates");
}

void require_compatible_all(const ParamSet& global, std::span<const ClientUpdate> updates) {
  for (const auto& u : updates) {
    if (auto m = first_mismatch(global, u.params)) {
      throw IncompatibleError("client " + std::to_string(u.client_id) +
                              " is incompatible with the global model: " + *m);
    }
  }
}

std::vector<DivergenceReport> divergences(const ParamSet& global, std::span<const ClientUpdate> updates) {
  std::vector<DivergenceReport> out;
  out.reserve(updates.size());
  for (const auto& u : updates) out.push_back(layer_divergence(global, u.params, u.client_id));
  return out;
}

LayerCoeffTable layer_delta_table(std::span<const DivergenceReport> reports) {
  LayerCoeffTable t;
  t.reserve(reports.size());
  for (const auto& r : reports) t.push_back(r.layer_deltas());
  return t;
}

LayerCoeffTable model_delta_table(std::span<const DivergenceReport> reports, std::size_t num_layers) {
  LayerCoeffTable t;
  t.reserve(reports.size());
  for (const auto& r : reports) t.emplace_back(num_layers, r.model_delta);
  return t;
}

LayerCoeffTable ones_table(std::size_t k, std::size_t num_layers) {
  return LayerCoeffTable(k, std::vector<double>(num_layers, 1.0));
}

// Rescales layer l by 1 / sum_k beta_k * delta_k^(l) where that sum is not ~0.
ParamSet renormalized(const ParamSet& p, std::span<const double> base, const LayerCoeffTable& deltas) {
  std::vector<LayerTensor> layers;
  layers.reserve(p.num_layers());
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    double s = 0.0;
    for (std::size_t k = 0; k < base.size(); ++k) s += base[k] * deltas[k][l];
    const auto& src = p.layer(l);
    std::vector<double> v(src.values().begin(), src.values().end());
    if (std::abs(s) > kZeroNorm) {
      for (auto& x : v) x /= s;
    }
    layers.emplace_back(src.name(), src.shape(), std::move(v));
  }
  return ParamSet(std::move(layers));
}

}  // namespace

void validate_update(const ClientUpdate& u) {
  if (u.num_samples < 1) {
    throw ValidationError("client " + std::to_string(u.client_id) + ": num_samples must be >= 1");
  }
  if (!std::isfinite(u.train_loss)) {
    throw ValidationError("client " + std::to_string(u.client_id) + ": train_loss is not finite");
  }
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kFairAvg: return "fairavg";
    case Strategy::kLoss: return "loss";
    case Strategy::kMDawa: return "mdawa";
    case Strategy::kLDawa: return "ldawa";
    case Strategy::kLDawaFedAvg: return "ldawa_fedavg";
    case Strategy::kLDawaLoss: return "ldawa_loss";
    case Strategy::kLDawaFedU: return "ldawa_fedu";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kStrategies) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown aggregation strategy '" + std::string(name) +
                        "' (expected fedavg|fairavg|loss|mdawa|ldawa|ldawa_fedavg|ldawa_loss|ldawa_fedu)");
}

std::span<const Strategy> all_strategies() { return kStrategies; }

bool is_divergence_aware(Strategy s) {
  return s == Strategy::kMDawa || s == Strategy::kLDawa || s == Strategy::kLDawaFedAvg ||
         s == Strategy::kLDawaLoss || s == Strategy::kLDawaFedU;
}

bool needs_sample_counts(Strategy s) {
  return s == Strategy::kFedAvg || s == Strategy::kLDawaFedAvg || s == Strategy::kLDawaFedU;
}

bool needs_losses(Strategy s) { return s == Strategy::kLoss || s == Strategy::kLDawaLoss; }

Strategy effective_strategy(const AggregationSpec& spec, std::size_t round) {
  return round < spec.warmup_rounds ? Strategy::kFedAvg : spec.strategy;
}

std::vector<double> coeffs_fedavg(std::span<const ClientUpdate> updates) {
  require_updates(updates, "coeffs_fedavg");
  double total = 0.0;
  for (const auto& u : updates) {
    validate_update(u);
    total += static_cast<double>(u.num_samples);
  }
  std::vector<double> c;
  c.reserve(updates.size());
  for (const auto& u : updates) c.push_back(static_cast<double>(u.num_samples) / total);
  return c;
}

std::vector<double> coeffs_loss(std::span<const ClientUpdate> updates) {
  require_updates(updates, "coeffs_loss");
  double lo = updates[0].train_loss;
  for (const auto& u : updates) {
    validate_update(u);
    lo = std::min(lo, u.train_loss);
  }
  // exp(-(L_k - L_min)) <= 1, and the minimum term is exactly 1, so the sum is in [1, K].
  std::vector<double> c;
  c.reserve(updates.size());
  double total = 0.0;
  for (const auto& u : updates) {
    c.push_back(std::exp(-(u.train_loss - lo)));
    total += c.back();
  }
  for (auto& x : c) x /= total;
  return c;
}

std::vector<double> coeffs_uniform(std::size_t k) {
  if (k == 0) throw ValidationError("coeffs_uniform: no clients");
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

ParamSet combine_layerwise(std::span<const ClientUpdate> updates, std::span<const double> base_coeffs,
                           const LayerCoeffTable& deltas) {
  require_updates(updates, "combine_layerwise");
  if (base_coeffs.size() != updates.size()) {
    throw ValidationError("combine_layerwise: " + std::to_string(base_coeffs.size()) +
                          " base coefficients for " + std::to_string(updates.size()) + " clients");
  }
  if (deltas.size() != updates.size()) {
    throw ValidationError("combine_layerwise: divergence table has " + std::to_string(deltas.size()) +
                          " rows for " + std::to_string(updates.size()) + " clients");
  }
  const ParamSet& proto = updates[0].params;
  for (std::size_t k = 0; k < updates.size(); ++k) {
    require_compatible(proto, updates[k].params);
    if (deltas[k].size() != proto.num_layers()) {
      throw ValidationError("combine_layerwise: client " + std::to_string(updates[k].client_id) +
                            " has " + std::to_string(deltas[k].size()) + " layer divergences, expected " +
                            std::to_string(proto.num_layers()));
    }
  }

  std::vector<LayerTensor> out;
  out.reserve(proto.num_layers());
  for (std::size_t l = 0; l < proto.num_layers(); ++l) {
    std::vector<double> acc(proto.layer(l).size(), 0.0);
    for (std::size_t k = 0; k < updates.size(); ++k) {
      const double c = base_coeffs[k] * deltas[k][l];
      const auto v = updates[k].params.layer(l).values();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * v[i];
    }
    out.emplace_back(proto.layer(l).name(), proto.layer(l).shape(), std::move(acc));
  }
  return ParamSet(std::move(out));
}

ParamSet aggregate_mdawa(const ParamSet& global, std::span<const ClientUpdate> updates) {
  require_updates(updates, "aggregate_mdawa");
  require_compatible_all(global, updates);
  const auto reports = divergences(global, updates);
  return combine_layerwise(updates, coeffs_uniform(updates.size()),
                           model_delta_table(reports, global.num_layers()));
}

ParamSet aggregate_ldawa(const ParamSet& global, std::span<const ClientUpdate> updates) {
  require_updates(updates, "aggregate_ldawa");
  return aggregate_weighted_ldawa(global, updates, coeffs_uniform(updates.size()));
}

ParamSet aggregate_weighted_ldawa(const ParamSet& global, std::span<const ClientUpdate> updates,
                                  std::span<const double> base_coeffs) {
  require_updates(updates, "aggregate_weighted_ldawa");
  require_compatible_all(global, updates);
  const auto reports = divergences(global, updates);
  return combine_layerwise(updates, base_coeffs, layer_delta_table(reports));
}

AggregationResult aggregate(const AggregationSpec& spec, std::size_t round, const ParamSet& global,
                            std::span<const ClientUpdate> updates) {
  require_updates(updates, "aggregate");
  require_compatible_all(global, updates);

  std::vector<ClientUpdate> sorted(updates.begin(), updates.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k].client_id == sorted[k - 1].client_id) {
      throw ValidationError("aggregate: duplicate client id " + std::to_string(sorted[k].client_id));
    }
  }
  for (const auto& u : sorted) validate_update(u);

  AggregationResult result;
  result.effective = effective_strategy(spec, round);
  result.reports = divergences(global, sorted);

  const std::size_t k = sorted.size();
  const std::size_t num_layers = global.num_layers();
  std::vector<double> base;
  LayerCoeffTable deltas;
  switch (result.effective) {
    case Strategy::kFedAvg:
      base = coeffs_fedavg(sorted);
      deltas = ones_table(k, num_layers);
      break;
    case Strategy::kFairAvg:
      base = coeffs_uniform(k);
      deltas = ones_table(k, num_layers);
      break;
    case Strategy::kLoss:
      base = coeffs_loss(sorted);
      deltas = ones_table(k, num_layers);
      break;
    case Strategy::kMDawa:
      base = coeffs_uniform(k);
      deltas = model_delta_table(result.reports, num_layers);
      break;
    case Strategy::kLDawa:
      base = coeffs_uniform(k);
      deltas = layer_delta_table(result.reports);
      break;
    case Strategy::kLDawaFedAvg:
    case Strategy::kLDawaFedU:
      base = coeffs_fedavg(sorted);
      deltas = layer_delta_table(result.reports);
      break;
    case Strategy::kLDawaLoss:
      base = coeffs_loss(sorted);
      deltas = layer_delta_table(result.reports);
      break;
  }
  result.params = combine_layerwise(sorted, base, deltas);
  if (spec.renormalize && is_divergence_aware(result.effective)) {
    result.params = renormalized(result.params, base, deltas);
  }
  return result;
}

}  // namespace ldawa
