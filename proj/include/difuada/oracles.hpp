#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "difuada/energy.hpp"
#include "difuada/instances.hpp"

namespace difuada {

enum class OracleMethod { held_karp, subset_enum, ils };

std::string_view to_string(OracleMethod method);

struct OracleResult {
  double optimal_value = 0.0;
  DiscreteSolution optimal_solution;
  OracleMethod method = OracleMethod::held_karp;
  bool exact = true;
};

inline constexpr std::size_t kHeldKarpMaxNodes = 16;
inline constexpr std::size_t kSubsetEnumMaxNodes = 12;

/// Exact closed tour over all nodes, starting at node 0. 3 <= N <= 16.
OracleResult held_karp_tsp(const DistanceMatrix& w);

/// Optimal closed-tour cost over an arbitrary node subset (bit v of `mask`
/// selects node v). One node costs 0, two nodes cost the out-and-back 2w.
double tsp_subset_cost(const DistanceMatrix& w, std::uint32_t mask);
std::vector<std::size_t> tsp_subset_tour(const DistanceMatrix& w, std::uint32_t mask);

/// Optimal tour cost of every node set containing `root`, from one Held-Karp
/// pass rooted there. Entry `mask` covers the root plus the non-root nodes
/// selected by `mask` over `others()`.
class RootedSubsetTours {
 public:
  RootedSubsetTours(const DistanceMatrix& w, std::size_t root);

  const std::vector<std::size_t>& others() const { return others_; }
  std::size_t subset_count() const { return cost_.size(); }
  double cost(std::uint32_t mask) const { return cost_[mask]; }
  /// Root-first optimal tour of the subset.
  std::vector<std::size_t> tour(std::uint32_t mask) const;

 private:
  std::size_t root_;
  std::size_t k_;
  std::vector<std::size_t> others_;
  std::vector<double> dp_;         // [mask * k + end]
  std::vector<std::uint8_t> prev_;  // predecessor index, k_ for the root
  std::vector<double> cost_;
  const DistanceMatrix* w_;
};

/// Minimises tour length + unvisited penalties over visit sets with
/// collected prize >= R. N <= 12. Ties break toward the smaller subset mask.
OracleResult brute_pctsp(const PctspInstance& instance);

/// Maximises collected score over visit sets whose optimal tour fits the
/// budget (inclusive). N <= 12. Ties prefer the shorter tour, then the
/// smaller mask. The reported value is the collected score.
OracleResult brute_op(const OpInstance& instance);

/// Delta(S) = TSP(V) - TSP(V \ S), bit v of `subset` selects node v.
double marginal_decrease(const DistanceMatrix& w, std::uint32_t subset);

struct TheoremReport {
  bool passed = false;
  std::string instance_id;
  std::string detail;
  std::string counterexample;  // serialized instance when the check fails
};

inline constexpr double kTheoremTolerance = 1e-9;

/// PCTSP without a prize threshold: optimum = TSP(V) + min_S [p(S) - Delta(S)],
/// and the oracle tour is an optimal tour of V \ S for a minimising S.
/// S ranges over subsets that exclude the depot. N <= 10.
TheoremReport verify_theorem_pctsp(const PctspInstance& instance);

/// OP with identical scores: the oracle visits N - |S*| nodes, where S*
/// minimises Delta(S) subject to Delta(S) >= TSP(V) - B, and its tour is an
/// optimal tour of V \ S*. N <= 10.
TheoremReport verify_theorem_op(const OpInstance& instance);

/// Node-splitting reduction: node i becomes i_in = 2i and i_out = 2i + 1 with
/// arc i_in -> i_out of weight s_i and arcs i_out -> j_in of weight w_ij.
/// Missing arcs are +infinity.
Eigen::MatrixXd node_weighted_reduction(const std::vector<double>& node_scores, const DistanceMatrix& w);

/// Exhaustive search over Hamiltonian cycles through node 0 on a directed
/// matrix, skipping infinite arcs. Returns +infinity when no cycle exists.
double brute_force_atsp(const Eigen::MatrixXd& arcs);

/// Node-weighted TSP by permutation enumeration: tour length + sum of scores.
double brute_node_weighted_tsp(const std::vector<double>& node_scores, const DistanceMatrix& w);

struct Replica {
  std::size_t node = 0;
  int time = 0;
};

/// Time-expanded graph of a TSP-TW instance under unit travel time.
struct TimeExpandedGraph {
  std::vector<Replica> replicas;
  std::vector<std::pair<std::size_t, std::size_t>> arcs;  // replica index pairs i_t -> j_{t+1}
  std::vector<std::vector<std::size_t>> out_arcs;           // adjacency by replica
  std::vector<std::vector<std::size_t>> replicas_of;        // replica indices per original node

  /// sum_i (sum_t visits(i_t) - 1)^2 over relaxed replica visit values.
  double replica_energy(const std::vector<double>& replica_visits) const;
  /// d replica_energy / d visits.
  std::vector<double> replica_energy_grad(const std::vector<double>& replica_visits) const;
};

/// H <= 12, N <= 5.
TimeExpandedGraph tsptw_expand(const TspTwInstance& instance);

/// Shortest depot-first tour found by walking the expanded graph from the
/// depot replica at time 0, one replica per node. +infinity when infeasible.
double brute_tsptw_expanded(const TspTwInstance& instance, const TimeExpandedGraph& graph);

/// Shortest depot-first tour by permutation enumeration, keeping only tours
/// whose k-th node has k inside its window. +infinity when infeasible.
double brute_tsptw_permutations(const TspTwInstance& instance);

/// Reference heuristic: construction, 2-opt with add/drop local search,
/// double-bridge and node-toggle perturbation, accept if better.
OracleResult ils_pctsp(const PctspInstance& instance, int iterations, std::uint64_t seed);

/// Exact oracle for N <= 12 (TSP up to 16); otherwise ILS for PCTSP.
OracleResult solve_oracle(const Instance& instance, int ils_iterations = 1000, std::uint64_t seed = 0);

}  // namespace difuada
