#pragma once
// Numerical checks shared by the unit tests and the acceptance binary. Each
// returns its worst observed deviation so callers can apply their own bound.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "difuada/denoiser.hpp"
#include "difuada/diffusion.hpp"
#include "difuada/energy.hpp"
#include "difuada/instances.hpp"
#include "difuada/oracles.hpp"
#include "difuada/rng.hpp"
#include "support.hpp"

namespace checks {

using namespace difuada;

struct Outcome {
  bool passed = true;
  double worst = 0.0;
  int cases = 0;
  int failures = 0;
  std::string detail;

  void fail(std::string what) {
    ++failures;
    if (passed) detail = std::move(what);
    passed = false;
  }
};

// A random instance of `kind` whose constraint term is active in roughly half
// the cases, so both sides of every hinge get exercised.
inline Instance gradient_fixture(ProblemKind kind, std::uint64_t seed, Rng& rng, const Heatmap& h) {
  const std::size_t n = h.size();
  Instance inst = generate(kind, n, seed);
  const DistanceMatrix w = distance_matrix(inst);
  if (auto* p = std::get_if<PctspInstance>(&inst)) {
    const auto y = node_visit_relaxation(h);
    double collected = 0.0;
    for (std::size_t v = 0; v < n; ++v) collected += p->prizes[v] * y[v];
    p->prize_threshold = collected * rng.uniform(0.5, 1.5);
  } else if (auto* o = std::get_if<OpInstance>(&inst)) {
    o->budget = 0.5 * (w.array() * h.probs.array()).sum() * rng.uniform(0.5, 1.5);
  }
  return inst;
}

inline bool near_kink(const Instance& inst, const Heatmap& h) {
  const DistanceMatrix w = distance_matrix(inst);
  if (const auto* p = std::get_if<PctspInstance>(&inst)) {
    const auto y = node_visit_relaxation(h);
    double collected = 0.0;
    for (std::size_t v = 0; v < y.size(); ++v) collected += p->prizes[v] * y[v];
    return std::abs(collected - p->prize_threshold) < 1e-4;
  }
  if (const auto* o = std::get_if<OpInstance>(&inst)) {
    return std::abs(0.5 * (w.array() * h.probs.array()).sum() - o->budget) < 1e-4;
  }
  return false;
}

/// Central differences of phi against grad_phi over `cases` random fixtures.
inline Outcome energy_gradient(ProblemKind kind, int cases, std::uint64_t seed, double bound) {
  Outcome out;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind)));
  const double eps = 1e-6;
  EnergyParams params;
  int made = 0;
  for (std::uint64_t k = 0; made < cases; ++k) {
    const std::size_t n = 5 + k % 3;
    params.mu = rng.uniform(0.5, 2.0);
    // entries small enough that every half-degree stays inside the clamp
    const Heatmap h = testing_support::random_heatmap(n, rng, 0.02, 0.3);
    const Instance inst = gradient_fixture(kind, derive_seed(seed, 1000 + k), rng, h);
    if (near_kink(inst, h)) continue;
    ++made;
    const Eigen::MatrixXd analytic = grad_phi(inst, h, params);
    Eigen::MatrixXd numeric = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      for (Eigen::Index j = i + 1; j < static_cast<Eigen::Index>(n); ++j) {
        Heatmap hp = h, hm = h;
        hp.probs(i, j) += eps;
        hp.probs(j, i) += eps;
        hm.probs(i, j) -= eps;
        hm.probs(j, i) -= eps;
        const double d = (phi(inst, hp, params) - phi(inst, hm, params)) / (2.0 * eps);
        numeric(i, j) = numeric(j, i) = d;
      }
    }
    const double err = testing_support::rel_l2(analytic, numeric);
    out.worst = std::max(out.worst, err);
    ++out.cases;
    if (err > bound) out.fail(fmt::format("{} case {}: relative error {:.3e}", to_string(kind), k, err));
  }
  return out;
}

inline void randomize(DenoiserParams& p, Rng& rng, double scale) {
  p.for_each([&](const std::string&, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  });
}

/// Finite differences of the training loss against loss_and_grads on a
/// downsized model, over every parameter entry.
inline Outcome denoiser_gradient(std::uint64_t seed, double bound) {
  Outcome out;
  Rng rng(seed);
  ModelConfig cfg{2, 4, 4};
  DenoiserParams params = init_params(cfg, seed);
  randomize(params, rng, 0.5);
  // LayerNorm gains near 1 keep the normalised activations well scaled
  for (auto& l : params.layers) {
    l.norm_h.gamma.array() += 1.0;
    l.norm_e.gamma.array() += 1.0;
  }
  params.norm_out.gamma.array() += 1.0;

  const NoiseSchedule schedule = make_schedule(10, 0.05, 0.2);
  std::vector<TrainSample> data;
  for (std::uint64_t k = 0; k < 2; ++k) {
    TspInstance inst = gen_tsp(5, derive_seed(seed, k));
    const OracleResult opt = held_karp_tsp(distance_matrix(inst));
    data.push_back(TrainSample{inst, BinaryState::from_heatmap(Heatmap::from_tour(5, opt.optimal_solution.tour), 0)});
  }
  std::vector<NoisySample> batch;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const int t = 3 + static_cast<int>(k) * 4;
    batch.push_back(NoisySample{&data[k].instance, &data[k].label, q_sample(data[k].label, t, schedule, rng), ""});
  }
  const LossAndGrads lg = loss_and_grads(params, batch);

  std::vector<double> analytic, numeric;
  const double eps = 1e-5;
  DenoiserParams probe = params;
  std::vector<Eigen::MatrixXd*> tensors;
  probe.for_each([&](const std::string&, Eigen::MatrixXd& m) { tensors.push_back(&m); });
  std::vector<const Eigen::MatrixXd*> grads;
  lg.grads.for_each([&](const std::string&, const Eigen::MatrixXd& m) { grads.push_back(&m); });
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    Eigen::MatrixXd& m = *tensors[t];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double keep = m.data()[i];
      m.data()[i] = keep + eps;
      const double up = loss_and_grads(probe, batch).loss;
      m.data()[i] = keep - eps;
      const double down = loss_and_grads(probe, batch).loss;
      m.data()[i] = keep;
      numeric.push_back((up - down) / (2.0 * eps));
      analytic.push_back(grads[t]->data()[i]);
    }
  }
  const Eigen::Map<Eigen::VectorXd> a(analytic.data(), static_cast<Eigen::Index>(analytic.size()));
  const Eigen::Map<Eigen::VectorXd> b(numeric.data(), static_cast<Eigen::Index>(numeric.size()));
  out.worst = (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
  out.cases = static_cast<int>(analytic.size());
  if (out.worst > bound) out.fail(fmt::format("denoiser relative error {:.3e} over {} entries", out.worst, out.cases));
  return out;
}

/// Empirical flip rate of q_sample against gamma_t; worst is in units of sigma.
inline Outcome flip_rates(const std::vector<int>& times, int draws, std::uint64_t seed) {
  Outcome out;
  const NoiseSchedule schedule = make_schedule();
  Rng rng(seed);
  BinaryState x0 = BinaryState::zeros(3, 0);
  x0.set(0, 1, true);
  for (int t : times) {
    long flips = 0;
    for (int d = 0; d < draws; ++d) {
      const BinaryState xt = q_sample(x0, t, schedule, rng);
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) flips += xt(i, j) != x0(i, j);
      }
    }
    const double trials = 3.0 * draws;
    const double g = schedule.gamma(t);
    const double sigma = std::sqrt(g * (1.0 - g) / trials);
    const double z = std::abs(flips / trials - g) / sigma;
    out.worst = std::max(out.worst, z);
    ++out.cases;
    if (z > 3.0) out.fail(fmt::format("t={}: rate {:.5f} vs gamma {:.5f} ({:.2f} sigma)", t, flips / trials, g, z));
  }
  return out;
}

using Mat2 = std::array<std::array<double, 2>, 2>;

inline Mat2 mul(const Mat2& a, const Mat2& b) {
  Mat2 c{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  return c;
}

inline Mat2 step_matrix(double beta) { return Mat2{{{1.0 - beta, beta}, {beta, 1.0 - beta}}}; }

/// P(x_s = 1 | x_t = b) mixed over the clean bit, from explicit products of
/// the per-step 2x2 matrices.
inline double enumerate_posterior(const std::vector<double>& betas, int s, int t, int b, double p1) {
  Mat2 upto_s{{{1, 0}, {0, 1}}}, between{{{1, 0}, {0, 1}}};
  for (int k = 1; k <= s; ++k) upto_s = mul(upto_s, step_matrix(betas[static_cast<std::size_t>(k - 1)]));
  for (int k = s + 1; k <= t; ++k) between = mul(between, step_matrix(betas[static_cast<std::size_t>(k - 1)]));
  double mix = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double w1 = upto_s[c][1] * between[1][b];
    const double w0 = upto_s[c][0] * between[0][b];
    const double cond = (w0 + w1) > 0.0 ? w1 / (w0 + w1) : b;
    mix += (c == 1 ? p1 : 1.0 - p1) * cond;
  }
  return mix;
}

/// Single-edge posteriors against enumeration over random schedules and skips.
inline Outcome posterior_enumeration(int cases, std::uint64_t seed) {
  Outcome out;
  Rng rng(seed);
  for (int k = 0; k < cases; ++k) {
    const int T = 2 + static_cast<int>(rng.below(6));
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (double& b : betas) b = rng.uniform(0.0, 0.45);
    const NoiseSchedule schedule = NoiseSchedule::from_betas(betas);
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(t)));
    const int b = static_cast<int>(rng.below(2));
    const double p1 = rng.uniform();
    BinaryState xt = BinaryState::zeros(2, t);
    xt.set(0, 1, b == 1);
    Heatmap h = Heatmap::zeros(2);
    h.probs(0, 1) = h.probs(1, 0) = p1;
    const double got = posterior_probs(xt, h, t, schedule, s)(0, 1);
    const double want = enumerate_posterior(betas, s, t, b, p1);
    const double err = std::abs(got - want);
    out.worst = std::max(out.worst, err);
    ++out.cases;
    if (err > 1e-12) out.fail(fmt::format("T={} t={} s={} b={}: {} vs {}", T, t, s, b, got, want));
  }
  return out;
}

inline Outcome held_karp_vs_permutations(int cases, std::uint64_t seed) {
  Outcome out;
  for (int k = 0; k < cases; ++k) {
    const std::size_t n = 3 + static_cast<std::size_t>(k) % 7;
    const DistanceMatrix w = distance_matrix(gen_tsp(n, derive_seed(seed, static_cast<std::uint64_t>(k))));
    const OracleResult hk = held_karp_tsp(w);
    const double perm = testing_support::perm_tsp(w);
    const double err = std::abs(hk.optimal_value - perm);
    out.worst = std::max(out.worst, err);
    ++out.cases;
    if (err > 1e-9) out.fail(fmt::format("N={} case {}: {} vs {}", n, k, hk.optimal_value, perm));
    if (std::abs(tour_length(hk.optimal_solution.tour, w) - hk.optimal_value) > 1e-9) {
      out.fail(fmt::format("N={} case {}: returned tour does not match value", n, k));
    }
  }
  return out;
}

inline Outcome subset_oracles_vs_enumeration(ProblemKind kind, int cases, std::uint64_t seed) {
  Outcome out;
  for (int k = 0; k < cases; ++k) {
    const std::size_t n = 4 + static_cast<std::size_t>(k) % 5;
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k));
    double got = 0.0, want = 0.0;
    if (kind == ProblemKind::pctsp) {
      const PctspInstance inst = gen_pctsp(n, s);
      got = brute_pctsp(inst).optimal_value;
      want = testing_support::enum_pctsp(inst);
    } else {
      const OpInstance inst = gen_op(n, s);
      got = brute_op(inst).optimal_value;
      want = testing_support::enum_op(inst);
    }
    const double err = std::abs(got - want);
    out.worst = std::max(out.worst, err);
    ++out.cases;
    if (err > 1e-9) out.fail(fmt::format("{}-{} case {}: {} vs {}", to_string(kind), n, k, got, want));
  }
  return out;
}

}  // namespace checks
