#include "difuada/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "difuada/errors.hpp"

namespace difuada {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

void require_dims(const Heatmap& h, std::size_t n) {
  if (h.size() != n || h.probs.cols() != h.probs.rows()) {
    throw DimensionError(fmt::format("heatmap is {}x{}, instance has {} nodes", h.probs.rows(),
                                     h.probs.cols(), n));
  }
}

// Sum over u < v of w[u][v] * h[u][v].
double weighted_edges(const Heatmap& h, const DistanceMatrix& w) {
  return 0.5 * (w.array() * h.probs.array()).sum();
}

std::vector<double> raw_half_degree(const Heatmap& h) {
  const Eigen::VectorXd col = h.probs.colwise().sum().transpose();
  std::vector<double> out(static_cast<std::size_t>(col.size()));
  for (Index v = 0; v < col.size(); ++v) out[static_cast<std::size_t>(v)] = 0.5 * col(v);
  return out;
}

// d clamp(x,0,1)/dx, left-sided at the upper bound.
double clamp_slope(double raw) { return raw >= 0.0 && raw <= 1.0 ? 1.0 : 0.0; }

// Fills g with the pair gradient of sum_v c_v * y_v given per-node dphi/dy.
void add_node_term(Eigen::MatrixXd& g, const std::vector<double>& dphi_dy,
                   const std::vector<double>& raw) {
  const std::size_t n = raw.size();
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double d = 0.5 * (dphi_dy[u] * clamp_slope(raw[u]) + dphi_dy[v] * clamp_slope(raw[v]));
      g(idx(u), idx(v)) += d;
      g(idx(v), idx(u)) += d;
    }
  }
}

double prize_shortfall(const PctspInstance& inst, const std::vector<double>& y) {
  double collected = 0.0;
  for (std::size_t v = 0; v < y.size(); ++v) collected += inst.prizes[v] * y[v];
  return std::max(0.0, inst.prize_threshold - collected);
}

}  // namespace

Heatmap Heatmap::zeros(std::size_t n) { return Heatmap{Eigen::MatrixXd::Zero(idx(n), idx(n))}; }

Heatmap Heatmap::uniform(std::size_t n, double value) {
  Heatmap h{Eigen::MatrixXd::Constant(idx(n), idx(n), value)};
  h.probs.diagonal().setZero();
  return h;
}

Heatmap Heatmap::from_tour(std::size_t n, const std::vector<std::size_t>& tour) {
  Heatmap h = zeros(n);
  if (tour.size() < 2) return h;
  for (std::size_t k = 0; k < tour.size(); ++k) {
    const std::size_t a = tour[k];
    const std::size_t b = tour[(k + 1) % tour.size()];
    h.probs(idx(a), idx(b)) = 1.0;
    h.probs(idx(b), idx(a)) = 1.0;
  }
  return h;
}

DiscreteSolution DiscreteSolution::from_tour(std::size_t n, std::vector<std::size_t> tour) {
  DiscreteSolution s;
  s.visited.assign(n, false);
  for (std::size_t v : tour) {
    if (v < n) s.visited[v] = true;
  }
  s.tour = std::move(tour);
  return s;
}

double tour_length(const std::vector<std::size_t>& tour, const DistanceMatrix& w) {
  if (tour.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < tour.size(); ++k) {
    total += w(idx(tour[k]), idx(tour[(k + 1) % tour.size()]));
  }
  return total;
}

std::vector<double> node_visit_relaxation(const Heatmap& h) {
  auto y = raw_half_degree(h);
  for (double& v : y) v = std::clamp(v, 0.0, 1.0);
  return y;
}

double phi_tsp(const Heatmap& h, const DistanceMatrix& w) {
  if (h.probs.rows() != w.rows() || h.probs.cols() != w.cols()) {
    throw DimensionError(fmt::format("heatmap is {}x{}, distance matrix is {}x{}", h.probs.rows(),
                                     h.probs.cols(), w.rows(), w.cols()));
  }
  return weighted_edges(h, w);
}

double phi_pctsp(const Heatmap& h, const PctspInstance& inst, const EnergyParams& params) {
  require_dims(h, inst.size());
  const DistanceMatrix w = distance_matrix(inst.base);
  const auto y = node_visit_relaxation(h);
  double value = weighted_edges(h, w);
  for (std::size_t v = 0; v < y.size(); ++v) value += inst.penalties[v] * (1.0 - y[v]);
  const double g = prize_shortfall(inst, y);
  return value + params.mu * g * g;
}

double phi_op(const Heatmap& h, const OpInstance& inst, const EnergyParams& params) {
  require_dims(h, inst.size());
  const DistanceMatrix w = distance_matrix(inst.base);
  const auto y = node_visit_relaxation(h);
  double value = 0.0;
  for (std::size_t v = 0; v < y.size(); ++v) value -= inst.scores[v] * y[v];
  const double g = std::max(0.0, weighted_edges(h, w) - inst.budget);
  return value + params.mu * g * g;
}

double phi_tsptw(const Heatmap& h, const TspTwInstance& inst, const EnergyParams& params) {
  require_dims(h, inst.size());
  const DistanceMatrix w = distance_matrix(inst.base);
  double value = weighted_edges(h, w);
  for (double d : raw_half_degree(h)) value += params.mu * (d - 1.0) * (d - 1.0);
  return value;
}

double phi(const Instance& instance, const Heatmap& h, const EnergyParams& params) {
  return std::visit(
      [&](const auto& inst) -> double {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, TspInstance>) {
          return phi_tsp(h, distance_matrix(inst));
        } else if constexpr (std::is_same_v<T, PctspInstance>) {
          return phi_pctsp(h, inst, params);
        } else if constexpr (std::is_same_v<T, OpInstance>) {
          return phi_op(h, inst, params);
        } else {
          return phi_tsptw(h, inst, params);
        }
      },
      instance);
}

Eigen::MatrixXd grad_phi(const Instance& instance, const Heatmap& h, const EnergyParams& params) {
  const std::size_t n = base_of(instance).size();
  require_dims(h, n);
  const DistanceMatrix w = distance_matrix(instance);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(idx(n), idx(n));

  std::visit(
      [&](const auto& inst) {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, TspInstance>) {
          g = w;
        } else if constexpr (std::is_same_v<T, PctspInstance>) {
          g = w;
          const auto raw = raw_half_degree(h);
          const auto y = node_visit_relaxation(h);
          const double shortfall = prize_shortfall(inst, y);
          std::vector<double> dphi_dy(n);
          for (std::size_t v = 0; v < n; ++v) {
            dphi_dy[v] = -inst.penalties[v] - 2.0 * params.mu * shortfall * inst.prizes[v];
          }
          add_node_term(g, dphi_dy, raw);
        } else if constexpr (std::is_same_v<T, OpInstance>) {
          const double overshoot = std::max(0.0, weighted_edges(h, w) - inst.budget);
          g = (2.0 * params.mu * overshoot) * w;
          const auto raw = raw_half_degree(h);
          std::vector<double> dphi_dy(n);
          for (std::size_t v = 0; v < n; ++v) dphi_dy[v] = -inst.scores[v];
          add_node_term(g, dphi_dy, raw);
        } else {
          g = w;
          const auto raw = raw_half_degree(h);
          for (std::size_t u = 0; u < n; ++u) {
            for (std::size_t v = u + 1; v < n; ++v) {
              // d/dh_uv of mu*(d_u - 1)^2 + mu*(d_v - 1)^2, each d moves by 1/2.
              const double d = params.mu * ((raw[u] - 1.0) + (raw[v] - 1.0));
              g(idx(u), idx(v)) += d;
              g(idx(v), idx(u)) += d;
            }
          }
        }
      },
      instance);
  g.diagonal().setZero();
  return g;
}

void check_structure(const Instance& instance, const DiscreteSolution& solution) {
  const std::size_t n = base_of(instance).size();
  const auto& tour = solution.tour;
  if (solution.visited.size() != n) throw Error("solution visited mask has wrong size");
  if (tour.empty()) throw Error("solution tour is empty");
  std::vector<bool> seen(n, false);
  for (std::size_t v : tour) {
    if (v >= n) throw Error(fmt::format("tour references node {} outside [0,{})", v, n));
    if (seen[v]) throw Error(fmt::format("tour visits node {} twice", v));
    seen[v] = true;
  }
  if (seen != solution.visited) throw Error("visited mask disagrees with tour membership");
  const ProblemKind kind = kind_of(instance);
  if (kind == ProblemKind::tsp || kind == ProblemKind::tsptw) {
    if (tour.size() != n) throw Error("tour must visit every node");
  }
  if (tour.front() != depot_of(instance)) throw Error("tour must start at the depot");
}

double phi_discrete(const Instance& instance, const DiscreteSolution& solution) {
  check_structure(instance, solution);
  const DistanceMatrix w = distance_matrix(instance);
  const double length = tour_length(solution.tour, w);
  return std::visit(
      [&](const auto& inst) -> double {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, PctspInstance>) {
          double value = length;
          for (std::size_t v = 0; v < inst.size(); ++v) {
            if (!solution.visited[v]) value += inst.penalties[v];
          }
          return value;
        } else if constexpr (std::is_same_v<T, OpInstance>) {
          double score = 0.0;
          for (std::size_t v = 0; v < inst.size(); ++v) {
            if (solution.visited[v]) score += inst.scores[v];
          }
          return -score;
        } else {
          return length;
        }
      },
      instance);
}

namespace {

// Visits every undirected cycle over `nodes` (nodes[0] fixed first) once.
template <typename Fn>
void for_each_cycle(std::vector<std::size_t> nodes, Fn&& fn) {
  if (nodes.size() <= 3) {
    fn(nodes);
    return;
  }
  std::sort(nodes.begin() + 1, nodes.end());
  do {
    if (nodes[1] < nodes.back()) fn(nodes);
  } while (std::next_permutation(nodes.begin() + 1, nodes.end()));
}

bool windows_respected(const TspTwInstance& inst, const std::vector<std::size_t>& tour) {
  for (std::size_t k = 0; k < tour.size(); ++k) {
    const auto& tw = inst.windows[tour[k]];
    const int t = static_cast<int>(k);
    if (t < tw.earliest || t > tw.latest) return false;
  }
  return static_cast<int>(tour.size()) <= inst.horizon;
}

}  // namespace

std::vector<BoltzmannEntry> boltzmann(const Instance& instance, double tau) {
  const std::size_t n = base_of(instance).size();
  if (n > 8) throw SizeError(fmt::format("boltzmann enumeration supports N <= 8, got {}", n));
  if (!(tau > 0.0)) throw ConfigError("boltzmann temperature must be positive");
  const DistanceMatrix w = distance_matrix(instance);
  const std::size_t depot = depot_of(instance);

  std::vector<BoltzmannEntry> entries;
  auto push = [&](const std::vector<std::size_t>& tour) {
    auto sol = DiscreteSolution::from_tour(n, tour);
    const double energy = phi_discrete(instance, sol);
    entries.push_back({std::move(sol), energy, 0.0});
  };

  const ProblemKind kind = kind_of(instance);
  if (kind == ProblemKind::tsp) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for_each_cycle(all, push);
  } else if (kind == ProblemKind::tsptw) {
    // Direction matters under time windows.
    const auto& inst = std::get<TspTwInstance>(instance);
    std::vector<std::size_t> rest;
    for (std::size_t v = 1; v < n; ++v) rest.push_back(v);
    do {
      std::vector<std::size_t> tour{0};
      tour.insert(tour.end(), rest.begin(), rest.end());
      if (windows_respected(inst, tour)) push(tour);
    } while (std::next_permutation(rest.begin(), rest.end()));
  } else {
    std::vector<std::size_t> others;
    for (std::size_t v = 0; v < n; ++v) {
      if (v != depot) others.push_back(v);
    }
    for (std::size_t mask = 0; mask < (std::size_t{1} << others.size()); ++mask) {
      std::vector<std::size_t> nodes{depot};
      for (std::size_t b = 0; b < others.size(); ++b) {
        if (mask >> b & 1U) nodes.push_back(others[b]);
      }
      if (const auto* p = std::get_if<PctspInstance>(&instance)) {
        double prize = 0.0;
        for (std::size_t v : nodes) prize += p->prizes[v];
        if (prize < p->prize_threshold) continue;
        for_each_cycle(nodes, push);
      } else {
        const auto& o = std::get<OpInstance>(instance);
        for_each_cycle(nodes, [&](const std::vector<std::size_t>& tour) {
          if (tour_length(tour, w) <= o.budget) push(tour);
        });
      }
    }
  }
  if (entries.empty()) throw InfeasibleInstanceError("instance has no feasible solution");

  double min_energy = std::numeric_limits<double>::infinity();
  for (const auto& e : entries) min_energy = std::min(min_energy, e.energy);
  double z = 0.0;
  for (auto& e : entries) {
    e.probability = std::exp(-(e.energy - min_energy) / tau);
    z += e.probability;
  }
  for (auto& e : entries) e.probability /= z;
  return entries;
}

}  // namespace difuada
