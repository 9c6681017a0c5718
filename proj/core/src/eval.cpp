#include "ldawa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ldawa/errors.hpp"
#include "ldawa/losses.hpp"
#include "ldawa/partition.hpp"
#include "ldawa/rng.hpp"

namespace ldawa {

std::size_t EvalSpec::scaled_epochs() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(epochs) * epoch_scale));
}

std::vector<std::size_t> EvalSpec::scaled_milestones() const {
  std::vector<std::size_t> out;
  for (auto m : milestones) out.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(m) * epoch_scale)));
  return out;
}

void validate(const EvalSpec& spec) {
  if (spec.label_fractions.empty()) throw ValidationError("eval.label_fractions must not be empty");
  for (double f : spec.label_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("eval.label_fractions entries must be in (0, 1]");
  }
  if (!(spec.epoch_scale > 0.0)) throw ValidationError("eval.epoch_scale must be positive");
  if (spec.scaled_epochs() < 1) throw ValidationError("eval.epochs (after scaling) must be >= 1");
  if (spec.batch_size < 1) throw ValidationError("eval.batch_size must be >= 1");
  if (!(spec.lr > 0.0)) throw ValidationError("eval.lr must be positive");
  if (!(spec.momentum >= 0.0 && spec.momentum < 1.0)) throw ValidationError("eval.momentum must be in [0, 1)");
  if (!(spec.decay > 0.0)) throw ValidationError("eval.decay must be positive");
  const auto ms = spec.scaled_milestones();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (i > 0 && ms[i] <= ms[i - 1]) throw ValidationError("eval.milestones must be strictly increasing");
    if (ms[i] >= spec.scaled_epochs()) throw ValidationError("eval.milestones must be below eval.epochs");
  }
}

double accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels) {
  if (predictions.size() != labels.size()) {
    throw ValidationError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ValidationError("accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::vector<std::size_t> stratified_subsample(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("label fraction must be in (0, 1]");
  const auto counts = ds.class_counts();
  const std::size_t present = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(),
                                                                     [](std::size_t c) { return c > 0; }));
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  if (total < ds.num_classes()) {
    throw ValidationError("label fraction " + format_double(fraction) + " of " + std::to_string(ds.size()) +
                          " samples gives " + std::to_string(total) + ", fewer than the " +
                          std::to_string(ds.num_classes()) + " classes");
  }
  std::vector<double> w(counts.begin(), counts.end());
  auto alloc = largest_remainder(total, w);
  // Every non-empty class gets at least one example, taken from the largest allocation.
  if (total >= present) {
    for (std::size_t c = 0; c < alloc.size(); ++c) {
      if (counts[c] > 0 && alloc[c] == 0) {
        auto donor = std::max_element(alloc.begin(), alloc.end());
        --*donor;
        alloc[c] = 1;
      }
    }
  }

  Rng rng(derive_seed(seed, {stream::kProbe, 0}));
  std::vector<std::size_t> out;
  out.reserve(total);
  for (std::uint32_t c = 0; c < ds.num_classes(); ++c) {
    auto idx = ds.indices_of_class(c);
    std::shuffle(idx.begin(), idx.end(), rng);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(alloc[c], idx.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<std::uint32_t> argmax_rows(const Matrix& logits) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

Matrix all_rows(const Dataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows_to_matrix(ds.features(), ds.dim(), rows);
}

}  // namespace

double linear_probe(const ParamSet& encoder, const ModelSpec& model, const Dataset& train, const Dataset& test,
                    const EvalSpec& spec, double fraction) {
  validate(spec);
  if (train.num_classes() != test.num_classes()) {
    throw ValidationError("linear_probe: train and test sets disagree on the class count");
  }
  const auto picked = stratified_subsample(train, fraction, spec.seed);
  const Matrix feats_all = representations(encoder, model, all_rows(train.subset(picked)));
  const Matrix test_feats = representations(encoder, model, all_rows(test));
  std::vector<std::uint32_t> labels;
  labels.reserve(picked.size());
  for (auto i : picked) labels.push_back(train.label(i));

  const Eigen::Index h = feats_all.cols();
  const Eigen::Index classes = static_cast<Eigen::Index>(train.num_classes());
  Matrix w = Matrix::Zero(classes, h);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  Matrix vw = Matrix::Zero(classes, h);
  Eigen::RowVectorXd vb = Eigen::RowVectorXd::Zero(classes);

  Rng rng(derive_seed(spec.seed, {stream::kProbe, 1}));
  std::vector<std::size_t> order(picked.size());
  std::iota(order.begin(), order.end(), 0);
  const auto milestones = spec.scaled_milestones();
  double lr = spec.lr;
  for (std::size_t epoch = 0; epoch < spec.scaled_epochs(); ++epoch) {
    if (std::find(milestones.begin(), milestones.end(), epoch) != milestones.end()) lr *= spec.decay;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += spec.batch_size) {
      const std::size_t end = std::min(order.size(), start + spec.batch_size);
      Matrix x(static_cast<Eigen::Index>(end - start), h);
      std::vector<std::uint32_t> y;
      y.reserve(end - start);
      for (std::size_t r = start; r < end; ++r) {
        x.row(static_cast<Eigen::Index>(r - start)) = feats_all.row(static_cast<Eigen::Index>(order[r]));
        y.push_back(labels[order[r]]);
      }
      Matrix logits = x * w.transpose();
      logits.rowwise() += b;
      const auto lg = loss_xent(logits, y);
      vw = spec.momentum * vw + lg.grad.transpose() * x;
      vb = spec.momentum * vb + lg.grad.colwise().sum();
      w -= lr * vw;
      b -= lr * vb;
    }
  }

  Matrix test_logits = test_feats * w.transpose();
  test_logits.rowwise() += b;
  return accuracy(argmax_rows(test_logits), test.labels());
}

std::vector<std::uint32_t> predict(const ParamSet& params, const ModelSpec& model, const Dataset& ds) {
  if (!model.has_head()) throw ValidationError("predict: model has no classification head");
  const auto acts = forward(params, model, all_rows(ds));
  return argmax_rows(*acts.logits);
}

double classifier_accuracy(const ParamSet& params, const ModelSpec& model, const Dataset& ds) {
  return accuracy(predict(params, model, ds), ds.labels());
}

DivergenceSeries divergence_series(std::span<const RoundRecord> history) {
  if (history.empty()) throw ValidationError("divergence_series: empty history");
  DivergenceSeries s;
  std::map<ClientId, std::pair<double, std::size_t>> acc;
  for (const auto& r : history) {
    s.per_round_model.push_back(r.mu_delta_model);
    s.per_round_layer.push_back(r.mu_delta_layer);
    for (const auto& c : r.clients) {
      auto& [sum, n] = acc[c.client_id];
      sum += c.model_delta;
      ++n;
    }
  }
  for (const auto& [id, v] : acc) s.per_client_mean.emplace_back(id, v.first / static_cast<double>(v.second));
  return s;
}

}  // namespace ldawa
