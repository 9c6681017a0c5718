#include "ldawa/divergence.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "ldawa/errors.hpp"

namespace ldawa {

namespace {

double cosine_from_parts(double d, double na, double nb) {
  const bool za = na <= kZeroNorm;
  const bool zb = nb <= kZeroNorm;
  if (za && zb) return 1.0;
  if (za || zb) return 0.0;
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

nlohmann::json report_json(const DivergenceReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < r.per_layer_delta.size(); ++i) {
    layers.push_back({{"name", r.per_layer_delta[i].first},
                      {"delta", r.per_layer_delta[i].second},
                      {"euclid", r.per_layer_euclid[i].second}});
  }
  return {{"client_id", r.client_id}, {"model_delta", r.model_delta}, {"layers", std::move(layers)}};
}

}  // namespace

double cosine(const LayerTensor& a, const LayerTensor& b) {
  const double d = dot(a, b);
  return cosine_from_parts(d, norm(a), norm(b));
}

double DivergenceReport::mean_layer_delta() const {
  if (per_layer_delta.empty()) return 1.0;
  double s = 0.0;
  for (const auto& [_, d] : per_layer_delta) s += d;
  return s / static_cast<double>(per_layer_delta.size());
}

std::vector<double> DivergenceReport::layer_deltas() const {
  std::vector<double> out;
  out.reserve(per_layer_delta.size());
  for (const auto& [_, d] : per_layer_delta) out.push_back(d);
  return out;
}

DivergenceReport layer_divergence(const ParamSet& global, const ParamSet& client, ClientId client_id) {
  require_compatible(global, client);
  DivergenceReport r;
  r.client_id = client_id;
  r.per_layer_delta.reserve(global.num_layers());
  r.per_layer_euclid.reserve(global.num_layers());

  // Running totals visit values in flattened order, so the whole-model cosine
  // equals cosine(flatten(global), flatten(client)) bit for bit.
  double d_all = 0.0, gg_all = 0.0, cc_all = 0.0;
  for (std::size_t l = 0; l < global.num_layers(); ++l) {
    const auto g = global.layer(l).values();
    const auto c = client.layer(l).values();
    double d = 0.0, gg = 0.0, cc = 0.0, ee = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      d += g[i] * c[i];
      gg += g[i] * g[i];
      cc += c[i] * c[i];
      d_all += g[i] * c[i];
      gg_all += g[i] * g[i];
      cc_all += c[i] * c[i];
      const double e = g[i] - c[i];
      ee += e * e;
    }
    r.per_layer_delta.emplace_back(global.layer(l).name(),
                                   cosine_from_parts(d, std::sqrt(gg), std::sqrt(cc)));
    r.per_layer_euclid.emplace_back(global.layer(l).name(), std::sqrt(ee));
  }
  r.model_delta = cosine_from_parts(d_all, std::sqrt(gg_all), std::sqrt(cc_all));
  return r;
}

std::string_view to_string(MeanDeltaMode mode) {
  return mode == MeanDeltaMode::kWholeModel ? "model" : "layer";
}

MeanDeltaMode parse_mean_delta_mode(std::string_view s) {
  if (s == "model") return MeanDeltaMode::kWholeModel;
  if (s == "layer") return MeanDeltaMode::kPerLayerAveraged;
  throw ValidationError("unknown mean-delta mode '" + std::string(s) + "' (expected model|layer)");
}

double mean_delta(std::span<const DivergenceReport> reports, MeanDeltaMode mode) {
  if (reports.empty()) throw ValidationError("mean_delta: no divergence reports");
  double s = 0.0;
  for (const auto& r : reports) {
    s += mode == MeanDeltaMode::kWholeModel ? r.model_delta : r.mean_layer_delta();
  }
  return s / static_cast<double>(reports.size());
}

std::string report_to_json(const DivergenceReport& report) { return report_json(report).dump(); }

std::string reports_to_json(std::span<const DivergenceReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  return arr.dump(1) + "\n";
}

}  // namespace ldawa
