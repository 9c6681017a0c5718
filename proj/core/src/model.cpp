#include "ldawa/model.hpp"

#include <cmath>
#include <random>

#include "ldawa/errors.hpp"
#include "ldawa/rng.hpp"

namespace ldawa {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Stage {
  std::string weight;
  std::string bias;
  std::size_t in;
  std::size_t out;
  bool activate;
};

enum class Block { kEncoder, kProjector, kHead };

std::vector<Stage> block_stages(const ModelSpec& spec, Block block) {
  std::vector<Stage> out;
  auto add_chain = [&](const std::vector<std::size_t>& dims, const std::string& prefix, bool act_last) {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      const bool last = i + 2 == dims.size();
      out.push_back({prefix + "." + std::to_string(i) + ".weight", prefix + "." + std::to_string(i) + ".bias",
                     dims[i], dims[i + 1], !last || act_last});
    }
  };
  switch (block) {
    case Block::kEncoder: add_chain(spec.encoder_dims, "encoder", true); break;
    case Block::kProjector:
      if (spec.has_projector()) add_chain(spec.projector_dims, "projector", false);
      break;
    case Block::kHead:
      if (spec.has_head()) {
        out.push_back({"head.weight", "head.bias", spec.representation_dim(), *spec.head_classes, false});
      }
      break;
  }
  return out;
}

std::vector<Stage> all_stages(const ModelSpec& spec) {
  auto s = block_stages(spec, Block::kEncoder);
  for (auto b : {Block::kProjector, Block::kHead}) {
    auto more = block_stages(spec, b);
    s.insert(s.end(), more.begin(), more.end());
  }
  return s;
}

double act(Activation a, double x) { return a == Activation::kRelu ? (x > 0.0 ? x : 0.0) : std::tanh(x); }

double act_grad(Activation a, double pre) {
  if (a == Activation::kRelu) return pre > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(pre);
  return 1.0 - t * t;
}

ConstMap weight_map(const ParamSet& p, const Stage& s) {
  const auto& w = p.layer(s.weight);
  if (w.shape() != Shape{s.out, s.in}) {
    throw IncompatibleError("layer '" + s.weight + "' has shape " + shape_to_string(w.shape()) + ", model expects " +
                            shape_to_string({s.out, s.in}));
  }
  return ConstMap(w.values().data(), static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
}

RowVector bias_row(const ParamSet& p, const Stage& s) {
  const auto& b = p.layer(s.bias);
  if (b.shape() != Shape{s.out}) {
    throw IncompatibleError("layer '" + s.bias + "' has shape " + shape_to_string(b.shape()) + ", model expects " +
                            shape_to_string({s.out}));
  }
  return Eigen::Map<const RowVector>(b.values().data(), static_cast<Eigen::Index>(s.out));
}

Matrix run_stage(const ParamSet& p, const Stage& s, Activation a, const Matrix& in, Activations& acts) {
  Matrix pre = in * weight_map(p, s).transpose();
  pre.rowwise() += bias_row(p, s);
  Matrix out = s.activate ? Matrix(pre.unaryExpr([a](double x) { return act(a, x); })) : pre;
  acts.inputs.push_back(in);
  acts.pre.push_back(std::move(pre));
  return out;
}

// Backpropagates through `stages` (which occupy acts slots [first, first + n)).
// Writes weight/bias gradients into `grads` and returns the input gradient.
Matrix back_stages(const ParamSet& params, const std::vector<Stage>& stages, std::size_t first,
                   Activation a, const Activations& acts, Matrix grad_out,
                   std::vector<std::vector<double>>& grads) {
  for (std::size_t i = stages.size(); i-- > 0;) {
    const Stage& s = stages[i];
    const Matrix& pre = acts.pre[first + i];
    const Matrix& in = acts.inputs[first + i];
    Matrix d_pre = s.activate ? Matrix(grad_out.cwiseProduct(pre.unaryExpr([a](double x) { return act_grad(a, x); })))
                              : grad_out;
    const Matrix d_w = d_pre.transpose() * in;  // out x in
    const RowVector d_b = d_pre.colwise().sum();

    auto& gw = grads[*params.index_of(s.weight)];
    auto& gb = grads[*params.index_of(s.bias)];
    for (Eigen::Index r = 0; r < d_w.rows(); ++r) {
      for (Eigen::Index c = 0; c < d_w.cols(); ++c) gw[static_cast<std::size_t>(r * d_w.cols() + c)] += d_w(r, c);
    }
    for (Eigen::Index c = 0; c < d_b.size(); ++c) gb[static_cast<std::size_t>(c)] += d_b(c);

    grad_out = d_pre * weight_map(params, s);
  }
  return grad_out;
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ValidationError("unknown activation '" + std::string(s) + "' (expected relu|tanh)");
}

void validate(const ModelSpec& spec) {
  if (spec.encoder_dims.size() < 2) {
    throw ValidationError("model.encoder_dims needs at least an input and an output width");
  }
  for (auto d : spec.encoder_dims) {
    if (d == 0) throw ValidationError("model.encoder_dims entries must be positive");
  }
  if (!spec.projector_dims.empty()) {
    if (spec.projector_dims.size() < 2) {
      throw ValidationError("model.projector_dims needs at least an input and an output width");
    }
    if (spec.projector_dims.front() != spec.representation_dim()) {
      throw ValidationError("model.projector_dims[0] (" + std::to_string(spec.projector_dims.front()) +
                            ") must equal the encoder output width (" +
                            std::to_string(spec.representation_dim()) + ")");
    }
    for (auto d : spec.projector_dims) {
      if (d == 0) throw ValidationError("model.projector_dims entries must be positive");
    }
  }
  if (spec.head_classes && *spec.head_classes < 2) {
    throw ValidationError("model.head_classes must be at least 2");
  }
}

std::vector<std::string> encoder_layer_names(const ModelSpec& spec) {
  std::vector<std::string> out;
  for (const auto& s : block_stages(spec, Block::kEncoder)) {
    out.push_back(s.weight);
    out.push_back(s.bias);
  }
  return out;
}

bool is_encoder_layer(std::string_view name) { return name.rfind("encoder.", 0) == 0; }

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  std::vector<LayerTensor> layers;
  for (const auto& s : all_stages(spec)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(s.out * s.in), b(s.out);
    for (auto& x : w) x = u(rng);
    for (auto& x : b) x = u(rng);
    layers.emplace_back(s.weight, Shape{s.out, s.in}, std::move(w));
    layers.emplace_back(s.bias, Shape{s.out}, std::move(b));
  }
  return ParamSet(std::move(layers));
}

ParamSet encoder_params(const ParamSet& full, const ModelSpec& spec) {
  std::vector<LayerTensor> layers;
  for (const auto& name : encoder_layer_names(spec)) layers.push_back(full.layer(name));
  return ParamSet(std::move(layers));
}

Activations forward(const ParamSet& params, const ModelSpec& spec, const Matrix& batch) {
  if (static_cast<std::size_t>(batch.cols()) != spec.input_dim()) {
    throw IncompatibleError("forward: input width " + std::to_string(batch.cols()) + ", model expects " +
                            std::to_string(spec.input_dim()));
  }
  Activations acts;
  Matrix x = batch;
  for (const auto& s : block_stages(spec, Block::kEncoder)) x = run_stage(params, s, spec.activation, x, acts);
  acts.representation = x;
  if (spec.has_projector()) {
    for (const auto& s : block_stages(spec, Block::kProjector)) x = run_stage(params, s, spec.activation, x, acts);
    acts.projection = std::move(x);
  }
  if (spec.has_head()) {
    acts.logits = run_stage(params, block_stages(spec, Block::kHead).front(), spec.activation,
                            acts.representation, acts);
  }
  return acts;
}

Matrix representations(const ParamSet& params, const ModelSpec& spec, const Matrix& batch) {
  ModelSpec enc = spec;
  enc.projector_dims.clear();
  enc.head_classes.reset();
  return forward(params, enc, batch).representation;
}

ParamSet backward(const ParamSet& params, const ModelSpec& spec, const Activations& acts,
                  const Matrix* grad_projection, const Matrix* grad_logits) {
  const auto enc = block_stages(spec, Block::kEncoder);
  const auto proj = block_stages(spec, Block::kProjector);
  const auto head = block_stages(spec, Block::kHead);

  std::vector<std::vector<double>> grads;
  grads.reserve(params.num_layers());
  for (const auto& l : params.layers()) grads.emplace_back(l.size(), 0.0);

  Matrix grad_h = Matrix::Zero(acts.representation.rows(), acts.representation.cols());
  if (grad_projection) {
    if (!acts.projection) throw ValidationError("backward: model has no projector");
    grad_h += back_stages(params, proj, enc.size(), spec.activation, acts, *grad_projection, grads);
  }
  if (grad_logits) {
    if (!acts.logits) throw ValidationError("backward: model has no head");
    grad_h += back_stages(params, head, enc.size() + proj.size(), spec.activation, acts, *grad_logits, grads);
  }
  back_stages(params, enc, 0, spec.activation, acts, std::move(grad_h), grads);

  std::vector<LayerTensor> out;
  out.reserve(params.num_layers());
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    out.emplace_back(params.layer(i).name(), params.layer(i).shape(), std::move(grads[i]));
  }
  return ParamSet(std::move(out));
}

Matrix rows_to_matrix(std::span<const double> features, std::size_t dim, std::span<const std::size_t> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = features[rows[r] * dim + j];
  }
  return m;
}

}  // namespace ldawa
