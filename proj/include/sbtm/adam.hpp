#pragma once

#include <cstdint>
#include <vector>

#include "sbtm/mlp.hpp"

namespace sbtm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators shaped like the parameter set. Reused
/// across timesteps (warm start) unless reset() is called.
struct AdamState {
  std::vector<Mlp> m, v;
  std::int64_t t = 0;

  bool initialized() const { return !m.empty(); }
  void init_like(const std::vector<Mlp*>& params);
  void reset();
};

/// One bias-corrected Adam update of `params` in place. Zero gradient leaves
/// parameters untouched (up to the eps guard, which contributes exactly 0).
void adam_step(std::vector<Mlp*>& params, const std::vector<Mlp>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace sbtm
