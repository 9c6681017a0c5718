#include "ldawa/params.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ldawa/errors.hpp"

namespace ldawa {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

LayerTensor::LayerTensor(std::string name, Shape shape, std::vector<double> values)
    : name_(std::move(name)), shape_(std::move(shape)), values_(std::move(values)) {
  if (name_.empty()) throw ValidationError("layer tensor name must not be empty");
  for (std::size_t d : shape_) {
    if (d == 0) throw ValidationError("layer '" + name_ + "': shape dimensions must be positive");
  }
  if (shape_size(shape_) != values_.size()) {
    throw ValidationError("layer '" + name_ + "': shape " + shape_to_string(shape_) + " holds " +
                          std::to_string(shape_size(shape_)) + " values, got " +
                          std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("layer '" + name_ + "': non-finite value");
  }
}

LayerTensor LayerTensor::zeros(std::string name, Shape shape) {
  std::vector<double> v(shape_size(shape), 0.0);
  return LayerTensor(std::move(name), std::move(shape), std::move(v));
}

ParamSet::ParamSet(std::vector<LayerTensor> layers) : layers_(std::move(layers)) {
  std::unordered_set<std::string> seen;
  for (const auto& l : layers_) {
    if (!seen.insert(l.name()).second) {
      throw ValidationError("duplicate layer name '" + l.name() + "'");
    }
  }
}

std::size_t ParamSet::num_values() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.size();
  return n;
}

std::optional<std::size_t> ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name() == name) return i;
  }
  return std::nullopt;
}

const LayerTensor& ParamSet::layer(const std::string& name) const {
  auto idx = index_of(name);
  if (!idx) throw ValidationError("no layer named '" + name + "'");
  return layers_[*idx];
}

ParamSet ParamSet::zeros_like() const {
  std::vector<LayerTensor> out;
  out.reserve(layers_.size());
  for (const auto& l : layers_) out.push_back(LayerTensor::zeros(l.name(), l.shape()));
  return ParamSet(std::move(out));
}

std::optional<std::string> first_mismatch(const ParamSet& a, const ParamSet& b) {
  const std::size_t n = std::min(a.num_layers(), b.num_layers());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& la = a.layer(i);
    const auto& lb = b.layer(i);
    if (la.name() != lb.name()) {
      return "layer " + std::to_string(i) + ": name '" + la.name() + "' vs '" + lb.name() + "'";
    }
    if (la.shape() != lb.shape()) {
      return "layer '" + la.name() + "': shape " + shape_to_string(la.shape()) + " vs " +
             shape_to_string(lb.shape());
    }
  }
  if (a.num_layers() != b.num_layers()) {
    const auto& longer = a.num_layers() > b.num_layers() ? a : b;
    return "layer '" + longer.layer(n).name() + "': present in only one parameter set (" +
           std::to_string(a.num_layers()) + " vs " + std::to_string(b.num_layers()) + " layers)";
  }
  return std::nullopt;
}

bool compatible(const ParamSet& a, const ParamSet& b) { return !first_mismatch(a, b).has_value(); }

void require_compatible(const ParamSet& a, const ParamSet& b) {
  if (auto m = first_mismatch(a, b)) throw IncompatibleError("incompatible parameter sets: " + *m);
}

double dot(const LayerTensor& a, const LayerTensor& b) {
  if (a.shape() != b.shape()) {
    throw IncompatibleError("dot: shape " + shape_to_string(a.shape()) + " vs " +
                            shape_to_string(b.shape()));
  }
  const auto va = a.values();
  const auto vb = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  return s;
}

double norm(const LayerTensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

namespace {

void check_models(std::span<const ParamSet> models, const char* op) {
  if (models.empty()) throw ValidationError(std::string(op) + ": no models");
  for (std::size_t k = 1; k < models.size(); ++k) require_compatible(models[0], models[k]);
}

}  // namespace

ParamSet weighted_sum(std::span<const ParamSet> models, std::span<const double> coeffs) {
  check_models(models, "weighted_sum");
  if (coeffs.size() != models.size()) {
    throw ValidationError("weighted_sum: " + std::to_string(coeffs.size()) + " coefficients for " +
                          std::to_string(models.size()) + " models");
  }
  LayerCoeffTable table(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    table[k].assign(models[0].num_layers(), coeffs[k]);
  }
  return weighted_sum_per_layer(models, table);
}

ParamSet weighted_sum_per_layer(std::span<const ParamSet> models, const LayerCoeffTable& coeffs) {
  check_models(models, "weighted_sum_per_layer");
  const std::size_t num_layers = models[0].num_layers();
  if (coeffs.size() != models.size()) {
    throw ValidationError("weighted_sum_per_layer: coefficient rows " +
                          std::to_string(coeffs.size()) + " for " +
                          std::to_string(models.size()) + " models");
  }
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    if (coeffs[k].size() != num_layers) {
      throw ValidationError("weighted_sum_per_layer: model " + std::to_string(k) + " has " +
                            std::to_string(coeffs[k].size()) + " layer coefficients, expected " +
                            std::to_string(num_layers));
    }
  }

  std::vector<LayerTensor> out;
  out.reserve(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const auto& proto = models[0].layer(l);
    std::vector<double> acc(proto.size(), 0.0);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const double c = coeffs[k][l];
      const auto v = models[k].layer(l).values();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * v[i];
    }
    out.emplace_back(proto.name(), proto.shape(), std::move(acc));
  }
  return ParamSet(std::move(out));
}

LayerTensor flatten(const ParamSet& m) {
  std::vector<double> v;
  v.reserve(m.num_values());
  for (const auto& l : m.layers()) v.insert(v.end(), l.values().begin(), l.values().end());
  if (v.empty()) return LayerTensor();
  const std::size_t n = v.size();
  return LayerTensor("flat", {n}, std::move(v));
}

ParamSet unflatten(const LayerTensor& flat, const ParamSet& like) {
  if (flat.size() != like.num_values()) {
    throw IncompatibleError("unflatten: " + std::to_string(flat.size()) + " values for " +
                            std::to_string(like.num_values()) + " parameters");
  }
  std::vector<LayerTensor> out;
  out.reserve(like.num_layers());
  auto src = flat.values();
  std::size_t off = 0;
  for (const auto& l : like.layers()) {
    std::vector<double> v(src.begin() + static_cast<std::ptrdiff_t>(off),
                          src.begin() + static_cast<std::ptrdiff_t>(off + l.size()));
    off += l.size();
    out.emplace_back(l.name(), l.shape(), std::move(v));
  }
  return ParamSet(std::move(out));
}

}  // namespace ldawa
