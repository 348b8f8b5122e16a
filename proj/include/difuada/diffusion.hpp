#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "difuada/energy.hpp"
#include "difuada/rng.hpp"

namespace difuada {

/// Per-step flip probabilities beta_t (t = 1..T) of the binary symmetric
/// channel Q_t = [[1-b, b], [b, 1-b]] and the cumulative flip probability
/// gamma_t of Q_1 Q_2 ... Q_t, computed in closed form.
class NoiseSchedule {
 public:
  /// Linear beta from beta_min (t=1) to beta_max (t=T); requires
  /// 0 < beta_min <= beta_max < 1/2.
  static NoiseSchedule linear(int steps, double beta_min, double beta_max);
  /// Arbitrary betas in [0, 1/2], betas[0] is beta_1.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()) - 1; }
  double beta(int t) const;
  /// gamma_0 = 0.
  double gamma(int t) const;
  /// Flip probability of the composed kernel Q_{s+1} ... Q_t, for s <= t.
  double flip_between(int s, int t) const;

 private:
  explicit NoiseSchedule(std::vector<double> betas);

  std::vector<double> beta_;   // index 0 unused
  std::vector<double> gamma_;  // gamma_[0] = 0
};

NoiseSchedule make_schedule(int steps = 50, double beta_min = 0.01, double beta_max = 0.2);

/// Symmetric 0/1 edge matrix with zero diagonal, tagged with its timestep.
struct BinaryState {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> bits;
  int t = 0;

  static BinaryState zeros(std::size_t n, int t = 0);
  static BinaryState from_heatmap(const Heatmap& h, int t = 0);  // threshold at 1/2

  std::size_t size() const { return static_cast<std::size_t>(bits.rows()); }
  bool operator()(std::size_t i, std::size_t j) const {
    return bits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0;
  }
  void set(std::size_t i, std::size_t j, bool value);
  Heatmap as_heatmap() const;

  friend bool operator==(const BinaryState& a, const BinaryState& b) {
    return a.t == b.t && a.bits.rows() == b.bits.rows() && a.bits == b.bits;
  }
};

/// Independent Bernoulli(1/2) upper triangle, mirrored.
BinaryState uniform_state(std::size_t n, int t, Rng& rng);

/// Samples each upper-triangle edge from Bernoulli(probs), mirrored.
BinaryState sample_state(const Heatmap& probs, int t, Rng& rng);

/// Forward corruption x_0 -> x_t: each edge flips with probability gamma_t.
BinaryState q_sample(const BinaryState& x0, int t, const NoiseSchedule& schedule, Rng& rng);

/// Same contract as q_sample, used to restart the reverse chain from a
/// decoded solution.
BinaryState renoise(const BinaryState& x0, int level, const NoiseSchedule& schedule, Rng& rng);

/// Per-edge P(x_s = 1 | x_t, x0_probs) for s < t, marginalising over the clean
/// bit c with weights x0_probs:
///   q(x_s=a | x_t=b, c) = K_{s,t}[a,b] * Qbar_s[c,a] / Qbar_t[c,b]
/// where K_{s,t} is the composed kernel over (s, t]. s defaults to t-1.
Heatmap posterior_probs(const BinaryState& xt, const Heatmap& x0_probs, int t,
                        const NoiseSchedule& schedule, int s = -1);

/// Draws x_s from posterior_probs.
BinaryState reverse_step(const BinaryState& xt, const Heatmap& x0_probs, int t,
                         const NoiseSchedule& schedule, Rng& rng, int s = -1);

/// Descending start times of an evenly spaced skip schedule; the reverse pass
/// jumps from each entry to the next and from the last entry to 0.
std::vector<int> inference_timesteps(int steps_total, int steps);

}  // namespace difuada
