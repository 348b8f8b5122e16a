#include "difuada/guidance.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "difuada/errors.hpp"

namespace difuada {

void GuidanceConfig::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError(fmt::format("tau must be >= 0, got {}", tau));
  if (!(grad_clip > 0.0)) throw ConfigError(fmt::format("grad_clip must be > 0, got {}", grad_clip));
  if (!(energy.mu >= 0.0)) throw ConfigError(fmt::format("mu must be >= 0, got {}", energy.mu));
}

Heatmap guided_x0_probs(const Heatmap& x0_probs, const Instance& instance, const GuidanceConfig& cfg) {
  cfg.validate();
  if (!cfg.active()) return x0_probs;
  const std::size_t n = x0_probs.size();
  if (n != base_of(instance).size()) throw DimensionError("guidance: heatmap size differs from instance");
  const Eigen::MatrixXd grad = grad_phi(instance, x0_probs, cfg.energy);
  constexpr double kEps = 1e-9;
  Heatmap out = Heatmap::zeros(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    for (Eigen::Index j = i + 1; j < static_cast<Eigen::Index>(n); ++j) {
      const double p = std::clamp(x0_probs.probs(i, j), kEps, 1.0 - kEps);
      const double g = std::clamp(grad(i, j), -cfg.grad_clip, cfg.grad_clip);
      const double logit = std::log(p) - std::log1p(-p) - cfg.tau * g;
      const double q = 1.0 / (1.0 + std::exp(-logit));
      out.probs(i, j) = q;
      out.probs(j, i) = q;
    }
  }
  return out;
}

BinaryState guided_reverse_step(const DenoiserParams& params, const BinaryState& xt, int t, const Instance& instance,
                                const NoiseSchedule& schedule, const GuidanceConfig& cfg, Rng& rng, int s,
                                Heatmap* guided_out) {
  const Heatmap prior = forward(params, base_of(instance), xt, t);
  Heatmap guided = guided_x0_probs(prior, instance, cfg);
  BinaryState next = reverse_step(xt, guided, t, schedule, rng, s);
  if (guided_out) *guided_out = std::move(guided);
  return next;
}

}  // namespace difuada
