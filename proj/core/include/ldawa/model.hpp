#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ldawa/params.hpp"

namespace ldawa {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { kRelu, kTanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

/// Feed-forward encoder with an optional projector (self-supervised) and an
/// optional linear head (supervised).
///
/// encoder_dims = {d, h1, ..., h}: one linear layer per consecutive pair, each
/// followed by the activation, so the representation h is post-activation.
/// projector_dims = {h, ..., z}: activation between layers, none after the last.
/// head_classes = C adds a linear map h -> C producing logits.
///
/// Parameter order: encoder.{i}.weight, encoder.{i}.bias, projector.{i}.weight,
/// projector.{i}.bias, head.weight, head.bias. Weights are [out, in].
struct ModelSpec {
  std::vector<std::size_t> encoder_dims = {16, 64, 32};
  std::vector<std::size_t> projector_dims;
  Activation activation = Activation::kRelu;
  std::optional<std::size_t> head_classes;

  std::size_t input_dim() const { return encoder_dims.front(); }
  std::size_t representation_dim() const { return encoder_dims.back(); }
  bool has_projector() const { return projector_dims.size() >= 2; }
  bool has_head() const { return head_classes.has_value(); }
};

void validate(const ModelSpec& spec);

/// Names of the parameters that belong to the encoder (the "backbone").
std::vector<std::string> encoder_layer_names(const ModelSpec& spec);
bool is_encoder_layer(std::string_view name);

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

/// Keeps only the encoder layers of a full parameter set.
ParamSet encoder_params(const ParamSet& full, const ModelSpec& spec);

/// Everything backward() needs, plus the named outputs.
struct Activations {
  // Per linear stage, in execution order.
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  Matrix representation;                // h
  std::optional<Matrix> projection;     // z, when the spec has a projector
  std::optional<Matrix> logits;         // when the spec has a head
};

/// `batch` is rows x input_dim. Params may be a full set or, when the spec has
/// neither projector nor head, just the encoder.
Activations forward(const ParamSet& params, const ModelSpec& spec, const Matrix& batch);

/// Encoder-only forward pass.
Matrix representations(const ParamSet& params, const ModelSpec& spec, const Matrix& batch);

/// Gradient of a scalar objective given its gradient with respect to the
/// projection and/or logits. Layers untouched by the objective get zeros.
ParamSet backward(const ParamSet& params, const ModelSpec& spec, const Activations& acts,
                  const Matrix* grad_projection, const Matrix* grad_logits);

/// Rows of a dataset gathered into a matrix.
Matrix rows_to_matrix(std::span<const double> features, std::size_t dim,
                      std::span<const std::size_t> rows);

}  // namespace ldawa
