#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ldawa/params.hpp"

namespace ldawa {

using ClientId = std::uint32_t;

// Norms at or below this are treated as zero by cosine().
inline constexpr double kZeroNorm = 1e-12;

/// Cosine of the angle between two tensors, clamped to [-1, 1].
///
/// Degenerate layers: if both norms are <= kZeroNorm the tensors count as
/// aligned (1); if exactly one is, they count as orthogonal (0).
double cosine(const LayerTensor& a, const LayerTensor& b);

/// Angular divergence of one client model against the global model.
/// Per-layer entries keep the canonical layer order.
struct DivergenceReport {
  ClientId client_id = 0;
  std::vector<std::pair<std::string, double>> per_layer_delta;
  double model_delta = 1.0;
  std::vector<std::pair<std::string, double>> per_layer_euclid;

  double mean_layer_delta() const;
  std::vector<double> layer_deltas() const;
};

DivergenceReport layer_divergence(const ParamSet& global, const ParamSet& client,
                                  ClientId client_id = 0);

enum class MeanDeltaMode { kWholeModel, kPerLayerAveraged };

std::string_view to_string(MeanDeltaMode mode);
MeanDeltaMode parse_mean_delta_mode(std::string_view s);

/// Mean divergence across the participating clients of one round.
double mean_delta(std::span<const DivergenceReport> reports, MeanDeltaMode mode);

/// One JSON object per report.
std::string report_to_json(const DivergenceReport& report);
std::string reports_to_json(std::span<const DivergenceReport> reports);

}  // namespace ldawa
