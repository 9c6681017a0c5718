#pragma once

#include "ldawa/params.hpp"

namespace ldawa {

struct SgdConfig {
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Momentum buffers shaped like the parameters. Lives for one local training
/// session only; it is never uploaded or aggregated.
class MomentumState {
 public:
  explicit MomentumState(const ParamSet& like) : velocity_(like.zeros_like()) {}

  const ParamSet& velocity() const noexcept { return velocity_; }
  ParamSet& velocity() noexcept { return velocity_; }

 private:
  ParamSet velocity_;
};

/// v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v.
/// Throws std::runtime_error if an update produces a non-finite parameter.
void sgd_step(ParamSet& params, const ParamSet& grads, MomentumState& state, const SgdConfig& cfg);

}  // namespace ldawa
