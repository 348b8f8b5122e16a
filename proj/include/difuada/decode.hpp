#pragma once

#include <string>
#include <vector>

#include "difuada/energy.hpp"
#include "difuada/instances.hpp"

namespace difuada {

struct DecodeOptions {
  bool two_opt = false;
  int max_two_opt_passes = 50;
};

struct DecodedTour {
  DiscreteSolution solution;
  double objective = 0.0;  // phi_discrete: cost, or negated score for OP
  bool feasible = false;
  int repair_ops = 0;      // insertions and removals made after the seed walk
};

struct FeasibilityReport {
  bool feasible = false;
  double violation = 0.0;  // prize shortfall, budget overshoot, or lateness; 0 when feasible
  std::string message;
};

/// Edges by probability descending, ties to the lower (i, j) index; an edge is
/// kept when both ends have degree < 2 and it closes no short cycle. The
/// final edge closes the Hamiltonian cycle.
DecodedTour greedy_tsp(const Heatmap& h, const DistanceMatrix& w);

/// Seed walk from the depot, prize repair by r / detour, then penalty pruning.
DecodedTour greedy_pctsp(const Heatmap& h, const PctspInstance& instance, const DistanceMatrix& w);

/// Insertion by s * node support / detour while the length stays within B.
DecodedTour greedy_op(const Heatmap& h, const OpInstance& instance, const DistanceMatrix& w);

/// Depth-first walk from the depot at time 0, preferring high-probability
/// edges and keeping every arrival inside its window. Infeasible only when no
/// time-feasible order is found within the search limit.
DecodedTour greedy_tsptw(const Heatmap& h, const TspTwInstance& instance, const DistanceMatrix& w);

/// First-improvement 2-opt over the tour, keeping tour[0] in place.
std::vector<std::size_t> two_opt(std::vector<std::size_t> tour, const DistanceMatrix& w, int max_passes);

FeasibilityReport check_feasible(const DiscreteSolution& solution, const Instance& instance);

/// Dispatch by problem kind; applies 2-opt when requested (never to TSP-TW,
/// where reversing segments moves arrival times).
DecodedTour decode(const Heatmap& h, const Instance& instance, const DecodeOptions& options = {});

}  // namespace difuada
