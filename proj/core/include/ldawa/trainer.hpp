#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "ldawa/aggregation.hpp"
#include "ldawa/dataset.hpp"
#include "ldawa/losses.hpp"
#include "ldawa/model.hpp"
#include "ldawa/optim.hpp"
#include "ldawa/rng.hpp"

namespace ldawa {

enum class TrainMethod { kSupervised, kSimclr, kBarlowTwins };

std::string_view to_string(TrainMethod m);
TrainMethod parse_train_method(std::string_view s);
inline bool is_ssl(TrainMethod m) { return m != TrainMethod::kSupervised; }

struct TrainerSpec {
  TrainMethod method = TrainMethod::kSimclr;
  double temperature = 0.5;  // simclr
  double lambda = 5e-3;      // barlow_twins
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t local_epochs = 1;
  double augment_noise_std = 0.1;
  double augment_mask_prob = 0.1;

  SgdConfig sgd() const { return {lr, momentum, weight_decay}; }
};

/// Checks the trainer against itself and the model (SSL needs a projector and
/// no head; supervised needs a head and no projector).
void validate(const TrainerSpec& trainer, const ModelSpec& model);

struct ViewPair {
  Matrix a;
  Matrix b;
};

/// Two independent perturbations of `batch`: additive Gaussian noise, then
/// each coordinate zeroed with probability mask_prob.
ViewPair make_views(const Matrix& batch, double noise_std, double mask_prob, Rng& rng);

struct Objective {
  double loss = 0.0;
  ParamSet grads;
};

/// SSL objective on a pair of views: forward both through encoder and
/// projector, apply NT-Xent or Barlow Twins, backpropagate.
Objective ssl_objective(const ParamSet& params, const ModelSpec& model, const TrainerSpec& trainer,
                        const Matrix& view_a, const Matrix& view_b);

/// Cross-entropy objective through encoder and head.
Objective supervised_objective(const ParamSet& params, const ModelSpec& model, const Matrix& batch,
                               std::span<const std::uint32_t> labels);

/// E epochs of shuffled mini-batch SGD from `init`. Returns the trained
/// parameters, the sample count, and the sample-weighted mean batch loss of
/// the final epoch. With E = 0 the parameters are returned unchanged and the
/// loss comes from one pass without updates.
///
/// SSL drops a trailing batch of one sample when there are other batches.
ClientUpdate train_local(const Dataset& client_data, const ParamSet& init, const TrainerSpec& trainer,
                         const ModelSpec& model, Rng& rng, ClientId client_id = 0);

}  // namespace ldawa
