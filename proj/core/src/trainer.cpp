#include "ldawa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldawa/errors.hpp"

namespace ldawa {

std::string_view to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::kSupervised: return "supervised";
    case TrainMethod::kSimclr: return "simclr";
    case TrainMethod::kBarlowTwins: return "barlow_twins";
  }
  return "?";
}

TrainMethod parse_train_method(std::string_view s) {
  if (s == "supervised") return TrainMethod::kSupervised;
  if (s == "simclr") return TrainMethod::kSimclr;
  if (s == "barlow_twins") return TrainMethod::kBarlowTwins;
  throw ValidationError("unknown trainer method '" + std::string(s) + "' (expected supervised|simclr|barlow_twins)");
}

void validate(const TrainerSpec& t, const ModelSpec& model) {
  validate(model);
  if (!(t.temperature > 0.0)) throw ValidationError("trainer.temperature must be positive");
  if (!(t.lambda >= 0.0)) throw ValidationError("trainer.lambda must be non-negative");
  if (!(t.lr >= 0.0)) throw ValidationError("trainer.lr must be non-negative");
  if (!(t.momentum >= 0.0 && t.momentum < 1.0)) throw ValidationError("trainer.momentum must be in [0, 1)");
  if (!(t.weight_decay >= 0.0)) throw ValidationError("trainer.weight_decay must be non-negative");
  if (t.batch_size < 1) throw ValidationError("trainer.batch_size must be >= 1");
  if (is_ssl(t.method) && t.batch_size < 2) {
    throw ValidationError("trainer.batch_size must be >= 2 for self-supervised methods");
  }
  if (!(t.augment_noise_std >= 0.0 && t.augment_noise_std <= 1.0)) {
    throw ValidationError("trainer.augment_noise_std must be in [0, 1]");
  }
  if (!(t.augment_mask_prob >= 0.0 && t.augment_mask_prob <= 1.0)) {
    throw ValidationError("trainer.augment_mask_prob must be in [0, 1]");
  }
  if (is_ssl(t.method)) {
    if (!model.has_projector()) throw ValidationError("model.projector_dims is required for self-supervised training");
    if (model.has_head()) throw ValidationError("model.head_classes must be unset for self-supervised training");
  } else {
    if (!model.has_head()) throw ValidationError("model.head_classes is required for supervised training");
    if (model.has_projector()) throw ValidationError("model.projector_dims must be empty for supervised training");
  }
}

ViewPair make_views(const Matrix& batch, double noise_std, double mask_prob, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution mask(mask_prob);
  auto one_view = [&] {
    Matrix v = batch;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        if (noise_std > 0.0) v(i, j) += noise_std * noise(rng);
        if (mask_prob > 0.0 && mask(rng)) v(i, j) = 0.0;
      }
    }
    return v;
  };
  ViewPair out;
  out.a = one_view();
  out.b = one_view();
  return out;
}

namespace {

ParamSet sum_grads(const ParamSet& a, const ParamSet& b) {
  std::vector<LayerTensor> out;
  out.reserve(a.num_layers());
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const auto va = a.layer(l).values();
    const auto vb = b.layer(l).values();
    std::vector<double> v(va.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = va[i] + vb[i];
    out.emplace_back(a.layer(l).name(), a.layer(l).shape(), std::move(v));
  }
  return ParamSet(std::move(out));
}

}  // namespace

Objective ssl_objective(const ParamSet& params, const ModelSpec& model, const TrainerSpec& trainer,
                        const Matrix& view_a, const Matrix& view_b) {
  const auto acts_a = forward(params, model, view_a);
  const auto acts_b = forward(params, model, view_b);
  const PairLossGrad lg = trainer.method == TrainMethod::kBarlowTwins
                              ? loss_barlow(*acts_a.projection, *acts_b.projection, trainer.lambda)
                              : loss_ntxent(*acts_a.projection, *acts_b.projection, trainer.temperature);
  if (!std::isfinite(lg.loss)) throw std::runtime_error("self-supervised loss is not finite");
  Objective out;
  out.loss = lg.loss;
  out.grads = sum_grads(backward(params, model, acts_a, &lg.grad_a, nullptr),
                        backward(params, model, acts_b, &lg.grad_b, nullptr));
  return out;
}

Objective supervised_objective(const ParamSet& params, const ModelSpec& model, const Matrix& batch,
                               std::span<const std::uint32_t> labels) {
  const auto acts = forward(params, model, batch);
  const LossGrad lg = loss_xent(*acts.logits, labels);
  if (!std::isfinite(lg.loss)) throw std::runtime_error("cross-entropy loss is not finite");
  Objective out;
  out.loss = lg.loss;
  out.grads = backward(params, model, acts, nullptr, &lg.grad);
  return out;
}

ClientUpdate train_local(const Dataset& data, const ParamSet& init, const TrainerSpec& trainer,
                         const ModelSpec& model, Rng& rng, ClientId client_id) {
  validate(trainer, model);
  const bool ssl = is_ssl(trainer.method);
  if (data.empty()) throw ValidationError("client " + std::to_string(client_id) + " has no samples");
  if (ssl && data.size() < 2) {
    throw ValidationError("client " + std::to_string(client_id) +
                          " has fewer than 2 samples; self-supervised batches need at least 2");
  }
  if (data.dim() != model.input_dim()) {
    throw IncompatibleError("client " + std::to_string(client_id) + " data has dimension " +
                            std::to_string(data.dim()) + ", model expects " + std::to_string(model.input_dim()));
  }

  ParamSet params = init;
  MomentumState state(params);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  auto run_epoch = [&](bool update) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += trainer.batch_size) {
      const std::size_t end = std::min(order.size(), start + trainer.batch_size);
      if (ssl && end - start < 2) break;  // only reachable for a trailing single sample
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix x = rows_to_matrix(data.features(), data.dim(), rows);
      Objective obj;
      if (ssl) {
        const auto views = make_views(x, trainer.augment_noise_std, trainer.augment_mask_prob, rng);
        obj = ssl_objective(params, model, trainer, views.a, views.b);
      } else {
        std::vector<std::uint32_t> labels;
        labels.reserve(rows.size());
        for (auto r : rows) labels.push_back(data.label(r));
        obj = supervised_objective(params, model, x, labels);
      }
      weighted += obj.loss * static_cast<double>(rows.size());
      seen += rows.size();
      if (update) sgd_step(params, obj.grads, state, trainer.sgd());
    }
    return weighted / static_cast<double>(seen);
  };

  double last_loss = 0.0;
  if (trainer.local_epochs == 0) {
    last_loss = run_epoch(false);
  } else {
    for (std::size_t e = 0; e < trainer.local_epochs; ++e) last_loss = run_epoch(true);
  }

  ClientUpdate u;
  u.client_id = client_id;
  u.params = std::move(params);
  u.num_samples = data.size();
  u.train_loss = last_loss;
  return u;
}

}  // namespace ldawa
