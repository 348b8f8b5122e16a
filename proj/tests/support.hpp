#pragma once
// Test-side reference computations, written independently of the library's
// solvers: plain permutation and subset enumeration, no dynamic programming.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "difuada/energy.hpp"
#include "difuada/instances.hpp"
#include "difuada/rng.hpp"

namespace testing_support {

using difuada::DistanceMatrix;

inline double cycle_cost(const std::vector<std::size_t>& order, const DistanceMatrix& w) {
  if (order.size() < 2) return 0.0;
  double c = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    c += w(static_cast<Eigen::Index>(order[k]), static_cast<Eigen::Index>(order[(k + 1) % order.size()]));
  }
  return c;
}

/// Shortest closed tour over `nodes` by trying every order of nodes[1..].
inline double perm_tour(std::vector<std::size_t> nodes, const DistanceMatrix& w) {
  if (nodes.size() <= 1) return 0.0;
  std::sort(nodes.begin() + 1, nodes.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, cycle_cost(nodes, w));
  } while (std::next_permutation(nodes.begin() + 1, nodes.end()));
  return best;
}

inline double perm_tsp(const DistanceMatrix& w) {
  std::vector<std::size_t> all(static_cast<std::size_t>(w.rows()));
  std::iota(all.begin(), all.end(), 0);
  return perm_tour(all, w);
}

inline double enum_pctsp(const difuada::PctspInstance& inst) {
  const DistanceMatrix w = difuada::distance_matrix(inst.base);
  const std::size_t n = inst.size();
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1U << n); ++mask) {
    if (!(mask >> inst.depot & 1U)) continue;
    std::vector<std::size_t> nodes{inst.depot};
    double prize = inst.prizes[inst.depot], pen = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == inst.depot) continue;
      if (mask >> v & 1U) {
        nodes.push_back(v);
        prize += inst.prizes[v];
      } else {
        pen += inst.penalties[v];
      }
    }
    if (prize < inst.prize_threshold) continue;
    best = std::min(best, perm_tour(nodes, w) + pen);
  }
  return best;
}

inline double enum_op(const difuada::OpInstance& inst) {
  const DistanceMatrix w = difuada::distance_matrix(inst.base);
  const std::size_t n = inst.size();
  double best = 0.0;
  for (unsigned mask = 0; mask < (1U << n); ++mask) {
    if (!(mask >> inst.depot & 1U)) continue;
    std::vector<std::size_t> nodes{inst.depot};
    double score = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (v != inst.depot && (mask >> v & 1U)) {
        nodes.push_back(v);
        score += inst.scores[v];
      }
    }
    if (perm_tour(nodes, w) <= inst.budget) best = std::max(best, score);
  }
  return best;
}

inline difuada::Heatmap random_heatmap(std::size_t n, difuada::Rng& rng, double lo = 0.0, double hi = 1.0) {
  difuada::Heatmap h = difuada::Heatmap::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = rng.uniform(lo, hi);
      h.probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
      h.probs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = p;
    }
  }
  return h;
}

inline bool is_hamiltonian_cycle(const std::vector<std::size_t>& tour, std::size_t n) {
  if (tour.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (std::size_t v : tour) {
    if (v >= n || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

inline double rel_l2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

}  // namespace testing_support
