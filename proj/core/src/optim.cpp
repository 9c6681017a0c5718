#include "ldawa/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "ldawa/errors.hpp"

namespace ldawa {

void sgd_step(ParamSet& params, const ParamSet& grads, MomentumState& state, const SgdConfig& cfg) {
  require_compatible(params, grads);
  require_compatible(params, state.velocity());
  auto& layers = params.mutable_layers();
  auto& vel = state.velocity().mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].mutable_values();
    auto v = vel[l].mutable_values();
    const auto g = grads.layer(l).values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * w[i]);
      w[i] -= cfg.lr * v[i];
      if (!std::isfinite(w[i])) {
        throw std::runtime_error("sgd_step: layer '" + layers[l].name() + "' diverged to a non-finite value");
      }
    }
  }
}

}  // namespace ldawa
