#pragma once

#include "difuada/denoiser.hpp"
#include "difuada/diffusion.hpp"
#include "difuada/energy.hpp"
#include "difuada/instances.hpp"
#include "difuada/rng.hpp"

namespace difuada {

struct GuidanceConfig {
  double tau = 0.1;
  double grad_clip = 10.0;
  bool enabled = true;
  EnergyParams energy;

  /// Throws ConfigError on tau < 0 or grad_clip <= 0.
  void validate() const;
  bool active() const { return enabled && tau > 0.0; }
};

/// Logit shift l - tau * clip(d phi / d h, grad_clip) on every edge, mapped
/// back through the logistic function. Returns the input unchanged when
/// guidance is inactive.
Heatmap guided_x0_probs(const Heatmap& x0_probs, const Instance& instance, const GuidanceConfig& cfg);

/// forward -> guided_x0_probs -> posterior -> Bernoulli draw, from t to s
/// (s = t - 1 by default). Consumes the rng exactly like reverse_step. The
/// guided prediction is written to `guided_out` when given.
BinaryState guided_reverse_step(const DenoiserParams& params, const BinaryState& xt, int t, const Instance& instance,
                                const NoiseSchedule& schedule, const GuidanceConfig& cfg, Rng& rng, int s = -1,
                                Heatmap* guided_out = nullptr);

}  // namespace difuada
