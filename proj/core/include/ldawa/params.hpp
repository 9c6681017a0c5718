#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ldawa {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

/// One named parameter tensor, stored flat in row-major order.
///
/// Construction validates that the shape matches the value count and that
/// every value is finite. A weight matrix and its bias are two separate
/// tensors.
class LayerTensor {
 public:
  LayerTensor() = default;
  LayerTensor(std::string name, Shape shape, std::vector<double> values);

  /// Zero-filled tensor of the given shape.
  static LayerTensor zeros(std::string name, Shape shape);

  const std::string& name() const noexcept { return name_; }
  const Shape& shape() const noexcept { return shape_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  // Unchecked mutable access for in-place optimizer updates. Callers are
  // responsible for keeping values finite.
  std::span<double> mutable_values() noexcept { return values_; }

  bool operator==(const LayerTensor&) const = default;

 private:
  std::string name_;
  Shape shape_;
  std::vector<double> values_;
};

/// Ordered collection of layer tensors in the model's canonical parameter order.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<LayerTensor> layers);

  const std::vector<LayerTensor>& layers() const noexcept { return layers_; }
  std::vector<LayerTensor>& mutable_layers() noexcept { return layers_; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t num_values() const noexcept;
  bool empty() const noexcept { return layers_.empty(); }

  const LayerTensor& layer(std::size_t i) const { return layers_.at(i); }
  const LayerTensor& layer(const std::string& name) const;
  std::optional<std::size_t> index_of(const std::string& name) const;

  /// Same names, order and shapes, with every value set to zero.
  ParamSet zeros_like() const;

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<LayerTensor> layers_;
};

/// Describes the first structural difference between two parameter sets, or
/// nullopt when they are compatible.
std::optional<std::string> first_mismatch(const ParamSet& a, const ParamSet& b);
bool compatible(const ParamSet& a, const ParamSet& b);
void require_compatible(const ParamSet& a, const ParamSet& b);

double dot(const LayerTensor& a, const LayerTensor& b);
double norm(const LayerTensor& a);

/// sum_k coeffs[k] * models[k], layer by layer, accumulated in input order.
ParamSet weighted_sum(std::span<const ParamSet> models, std::span<const double> coeffs);

/// Per-layer coefficient table: coeffs[k][l] multiplies layer l of model k.
using LayerCoeffTable = std::vector<std::vector<double>>;

/// Layer l of the result is sum_k coeffs[k][l] * (layer l of model k).
ParamSet weighted_sum_per_layer(std::span<const ParamSet> models, const LayerCoeffTable& coeffs);

/// Concatenates every layer in canonical order into one tensor named "flat".
LayerTensor flatten(const ParamSet& m);

/// Inverse of flatten: splits values back into the layout of `like`.
ParamSet unflatten(const LayerTensor& flat, const ParamSet& like);

}  // namespace ldawa
