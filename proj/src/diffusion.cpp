#include "difuada/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "difuada/errors.hpp"

namespace difuada {

namespace {
using Eigen::Index;
Index idx(std::size_t v) { return static_cast<Index>(v); }
}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> betas) {
  beta_.reserve(betas.size() + 1);
  beta_.push_back(0.0);
  beta_.insert(beta_.end(), betas.begin(), betas.end());
  gamma_.assign(beta_.size(), 0.0);
  double keep = 1.0;  // prod (1 - 2 beta_s)
  for (std::size_t t = 1; t < beta_.size(); ++t) {
    keep *= 1.0 - 2.0 * beta_[t];
    gamma_[t] = 0.5 * (1.0 - keep);
  }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError(fmt::format("schedule needs T >= 1, got {}", steps));
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 0.5)) {
    throw ConfigError(fmt::format(
        "schedule requires 0 < beta_min <= beta_max < 0.5, got ({}, {})", beta_min, beta_max));
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    betas[static_cast<std::size_t>(t)] = beta_min + frac * (beta_max - beta_min);
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("schedule needs at least one step");
  for (double b : betas) {
    if (!(b >= 0.0 && b <= 0.5)) throw ConfigError(fmt::format("beta {} outside [0, 0.5]", b));
  }
  return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > steps()) throw ConfigError(fmt::format("timestep {} outside [1, {}]", t, steps()));
  return beta_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::gamma(int t) const {
  if (t < 0 || t > steps()) throw ConfigError(fmt::format("timestep {} outside [0, {}]", t, steps()));
  return gamma_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::flip_between(int s, int t) const {
  if (s < 0 || s > t || t > steps()) {
    throw ConfigError(fmt::format("invalid interval ({}, {}] for T = {}", s, t, steps()));
  }
  double keep = 1.0;
  for (int k = s + 1; k <= t; ++k) keep *= 1.0 - 2.0 * beta_[static_cast<std::size_t>(k)];
  return 0.5 * (1.0 - keep);
}

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  return NoiseSchedule::linear(steps, beta_min, beta_max);
}

BinaryState BinaryState::zeros(std::size_t n, int t) {
  BinaryState s;
  s.bits.setZero(idx(n), idx(n));
  s.t = t;
  return s;
}

BinaryState BinaryState::from_heatmap(const Heatmap& h, int t) {
  const std::size_t n = h.size();
  BinaryState s = zeros(n, t);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s.set(i, j, h(i, j) > 0.5);
  }
  return s;
}

void BinaryState::set(std::size_t i, std::size_t j, bool value) {
  bits(idx(i), idx(j)) = value ? 1 : 0;
  bits(idx(j), idx(i)) = value ? 1 : 0;
}

Heatmap BinaryState::as_heatmap() const { return Heatmap{bits.cast<double>()}; }

BinaryState uniform_state(std::size_t n, int t, Rng& rng) {
  BinaryState s = BinaryState::zeros(n, t);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s.set(i, j, rng.bernoulli(0.5));
  }
  return s;
}

BinaryState sample_state(const Heatmap& probs, int t, Rng& rng) {
  const std::size_t n = probs.size();
  BinaryState s = BinaryState::zeros(n, t);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s.set(i, j, rng.bernoulli(probs(i, j)));
  }
  return s;
}

BinaryState q_sample(const BinaryState& x0, int t, const NoiseSchedule& schedule, Rng& rng) {
  if (x0.t != 0) throw ConfigError(fmt::format("q_sample expects a clean state, got t = {}", x0.t));
  if (t < 1 || t > schedule.steps()) {
    throw ConfigError(fmt::format("q_sample timestep {} outside [1, {}]", t, schedule.steps()));
  }
  const double flip = schedule.gamma(t);
  const std::size_t n = x0.size();
  BinaryState out = x0;
  out.t = t;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.bernoulli(flip)) out.set(i, j, !x0(i, j));
    }
  }
  return out;
}

BinaryState renoise(const BinaryState& x0, int level, const NoiseSchedule& schedule, Rng& rng) {
  return q_sample(x0, level, schedule, rng);
}

Heatmap posterior_probs(const BinaryState& xt, const Heatmap& x0_probs, int t,
                        const NoiseSchedule& schedule, int s) {
  if (t < 1 || t > schedule.steps()) {
    throw ConfigError(fmt::format("posterior timestep {} outside [1, {}]", t, schedule.steps()));
  }
  if (s < 0) s = t - 1;
  if (s >= t) throw ConfigError(fmt::format("posterior target {} must precede {}", s, t));
  const std::size_t n = xt.size();
  if (x0_probs.size() != n) throw DimensionError("posterior: heatmap and state sizes differ");

  const double k_flip = schedule.flip_between(s, t);
  const double s_flip = schedule.gamma(s);
  auto kernel = [](double flip, int a, int b) { return a == b ? 1.0 - flip : flip; };

  // cond[c][b] = P(x_s = 1 | x_t = b, x0 = c)
  double cond[2][2];
  for (int c = 0; c < 2; ++c) {
    for (int b = 0; b < 2; ++b) {
      const double w1 = kernel(k_flip, 1, b) * kernel(s_flip, c, 1);
      const double w0 = kernel(k_flip, 0, b) * kernel(s_flip, c, 0);
      const double total = w0 + w1;
      // A zero-likelihood clean bit keeps the current state.
      cond[c][b] = total > 0.0 ? w1 / total : static_cast<double>(b);
    }
  }

  Heatmap out = Heatmap::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int b = xt(i, j) ? 1 : 0;
      const double p1 = std::clamp(x0_probs(i, j), 0.0, 1.0);
      const double p = (1.0 - p1) * cond[0][b] + p1 * cond[1][b];
      out.probs(idx(i), idx(j)) = p;
      out.probs(idx(j), idx(i)) = p;
    }
  }
  return out;
}

BinaryState reverse_step(const BinaryState& xt, const Heatmap& x0_probs, int t,
                         const NoiseSchedule& schedule, Rng& rng, int s) {
  if (s < 0) s = t - 1;
  const Heatmap post = posterior_probs(xt, x0_probs, t, schedule, s);
  return sample_state(post, s, rng);
}

std::vector<int> inference_timesteps(int steps_total, int steps) {
  if (steps < 1 || steps > steps_total) {
    throw ConfigError(fmt::format("inference steps {} outside [1, {}]", steps, steps_total));
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    out.push_back(steps_total - static_cast<int>(static_cast<long long>(k) * steps_total / steps));
  }
  return out;
}

}  // namespace difuada
