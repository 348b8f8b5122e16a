#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "difuada/instances.hpp"

namespace difuada {

/// Symmetric N x N matrix of edge-inclusion probabilities with a zero diagonal.
/// This is the relaxed solution fed to energies and decoders.
struct Heatmap {
  Eigen::MatrixXd probs;

  static Heatmap zeros(std::size_t n);
  static Heatmap uniform(std::size_t n, double value);
  /// 0/1 adjacency of a closed tour (depot-first node order).
  static Heatmap from_tour(std::size_t n, const std::vector<std::size_t>& tour);

  std::size_t size() const { return static_cast<std::size_t>(probs.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
};

struct EnergyParams {
  double mu = 1.0;  // coefficient of the quadratic-hinge constraint term
};

/// A closed tour through the visited nodes. For the depot variants the tour
/// starts at the depot; a tour of one node is the empty route at the depot.
struct DiscreteSolution {
  std::vector<std::size_t> tour;
  std::vector<bool> visited;

  static DiscreteSolution from_tour(std::size_t n, std::vector<std::size_t> tour);
  friend bool operator==(const DiscreteSolution&, const DiscreteSolution&) = default;
};

double tour_length(const std::vector<std::size_t>& tour, const DistanceMatrix& w);

/// y_v = clamp(0.5 * sum_u h[u][v], 0, 1)
std::vector<double> node_visit_relaxation(const Heatmap& h);

double phi_tsp(const Heatmap& h, const DistanceMatrix& w);
double phi_pctsp(const Heatmap& h, const PctspInstance& instance, const EnergyParams& params);
double phi_op(const Heatmap& h, const OpInstance& instance, const EnergyParams& params);
/// Tour length plus mu * sum_v (half-degree - 1)^2, the one-visit-per-node
/// constraint of the time-expanded formulation projected onto the base graph.
double phi_tsptw(const Heatmap& h, const TspTwInstance& instance, const EnergyParams& params);

double phi(const Instance& instance, const Heatmap& h, const EnergyParams& params);

/// d(phi)/d(h_uv), where the symmetric pair (u,v) is a single variable.
/// Symmetric with a zero diagonal; clamp and hinge derivatives are one-sided
/// from the feasible side.
Eigen::MatrixXd grad_phi(const Instance& instance, const Heatmap& h, const EnergyParams& params);

/// Exact objective of a discrete solution: TSP and TSP-TW tour length, PCTSP
/// length plus unvisited penalties, OP negated collected score.
double phi_discrete(const Instance& instance, const DiscreteSolution& solution);

/// Throws unless the tour is a simple cycle over distinct valid nodes whose
/// membership agrees with `visited`, starting at the depot for depot variants.
void check_structure(const Instance& instance, const DiscreteSolution& solution);

struct BoltzmannEntry {
  DiscreteSolution solution;
  double energy = 0.0;
  double probability = 0.0;
};

/// Exhaustive Boltzmann distribution p(x) ~ exp(-phi(x)/tau) over every
/// feasible solution, each undirected cycle counted once. N <= 8.
std::vector<BoltzmannEntry> boltzmann(const Instance& instance, double tau);

}  // namespace difuada
