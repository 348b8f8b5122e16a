#include "difuada/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "difuada/errors.hpp"

namespace difuada {

namespace {

using Eigen::Index;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kImprove = 1e-12;

Index idx(std::size_t v) { return static_cast<Index>(v); }

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

// Cheapest place to put v into a closed tour; position is the insert index.
std::pair<std::size_t, double> cheapest_insertion(const std::vector<std::size_t>& tour, std::size_t v,
                                                  const DistanceMatrix& w) {
  if (tour.size() == 1) return {1, 2.0 * w(idx(tour[0]), idx(v))};
  std::size_t best_pos = 1;
  double best = kInf;
  for (std::size_t k = 0; k < tour.size(); ++k) {
    const std::size_t a = tour[k];
    const std::size_t b = tour[(k + 1) % tour.size()];
    const double delta = w(idx(a), idx(v)) + w(idx(v), idx(b)) - w(idx(a), idx(b));
    if (delta < best) {
      best = delta;
      best_pos = k + 1;
    }
  }
  return {best_pos, best};
}

double removal_saving(const std::vector<std::size_t>& tour, std::size_t pos, const DistanceMatrix& w) {
  const std::size_t m = tour.size();
  const std::size_t a = tour[(pos + m - 1) % m];
  const std::size_t v = tour[pos];
  const std::size_t b = tour[(pos + 1) % m];
  if (m == 2) return 2.0 * w(idx(a), idx(v));
  return w(idx(a), idx(v)) + w(idx(v), idx(b)) - w(idx(a), idx(b));
}

DecodedTour finish(const Instance& instance, std::vector<std::size_t> tour, int repair_ops) {
  DecodedTour out;
  out.solution = DiscreteSolution::from_tour(base_of(instance).size(), std::move(tour));
  out.objective = phi_discrete(instance, out.solution);
  out.feasible = check_feasible(out.solution, instance).feasible;
  out.repair_ops = repair_ops;
  return out;
}

}  // namespace

DecodedTour greedy_tsp(const Heatmap& h, const DistanceMatrix& w) {
  const std::size_t n = h.size();
  if (n < 3) throw SizeError("greedy_tsp requires N >= 3");
  if (static_cast<std::size_t>(w.rows()) != n) throw DimensionError("greedy_tsp: heatmap and matrix sizes differ");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  }
  // stable_sort keeps lexicographic (i, j) order among equal probabilities
  std::stable_sort(edges.begin(), edges.end(),
                   [&](const auto& a, const auto& b) { return h(a.first, a.second) > h(b.first, b.second); });

  std::vector<int> degree(n, 0);
  std::vector<std::vector<std::size_t>> adj(n);
  DisjointSets sets(n);
  std::size_t accepted = 0;
  for (const auto& [i, j] : edges) {
    if (accepted == n - 1) break;
    if (degree[i] >= 2 || degree[j] >= 2) continue;
    if (!sets.unite(i, j)) continue;
    ++degree[i];
    ++degree[j];
    adj[i].push_back(j);
    adj[j].push_back(i);
    ++accepted;
  }
  // One Hamiltonian path remains; walk it from one end, then rotate to node 0.
  std::size_t start = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (degree[v] < 2) {
      start = v;
      break;
    }
  }
  std::vector<std::size_t> path{start};
  std::size_t prev = n, cur = start;
  while (path.size() < n) {
    std::size_t next = n;
    for (std::size_t u : adj[cur]) {
      if (u != prev) next = u;
    }
    prev = cur;
    cur = next;
    path.push_back(cur);
  }
  const auto zero = std::find(path.begin(), path.end(), std::size_t{0});
  std::rotate(path.begin(), zero, path.end());

  DecodedTour out;
  out.solution = DiscreteSolution::from_tour(n, path);
  out.objective = tour_length(path, w);
  out.feasible = true;
  return out;
}

DecodedTour greedy_pctsp(const Heatmap& h, const PctspInstance& inst, const DistanceMatrix& w) {
  const std::size_t n = inst.size();
  if (h.size() != n) throw DimensionError("greedy_pctsp: heatmap size differs from instance");
  const std::size_t depot = inst.depot;

  // (1) follow the most probable edge until closing at the depot is preferred
  std::vector<std::size_t> tour{depot};
  std::vector<bool> in(n, false);
  in[depot] = true;
  std::size_t cur = depot;
  for (;;) {
    std::size_t best = n;
    double best_p = -1.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (in[v]) continue;
      if (h(cur, v) > best_p) {
        best_p = h(cur, v);
        best = v;
      }
    }
    if (best == n || best_p < 0.5) break;
    if (cur != depot && h(cur, depot) > best_p) break;
    tour.push_back(best);
    in[best] = true;
    cur = best;
  }

  int repairs = 0;
  double prize = 0.0;
  for (std::size_t v : tour) prize += inst.prizes[v];

  // (2) prize repair
  while (prize < inst.prize_threshold) {
    std::size_t best = n, best_pos = 0;
    double best_ratio = -1.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (in[v]) continue;
      const auto [pos, detour] = cheapest_insertion(tour, v, w);
      const double ratio = inst.prizes[v] / std::max(detour, 1e-12);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = v;
        best_pos = pos;
      }
    }
    if (best == n) break;
    tour.insert(tour.begin() + static_cast<std::ptrdiff_t>(best_pos), best);
    in[best] = true;
    prize += inst.prizes[best];
    ++repairs;
  }

  // (3) drop nodes whose detour costs more than their penalty
  for (;;) {
    std::size_t best_pos = 0;
    double best_gain = kImprove;
    for (std::size_t pos = 1; pos < tour.size(); ++pos) {
      const std::size_t v = tour[pos];
      if (prize - inst.prizes[v] < inst.prize_threshold) continue;
      const double gain = removal_saving(tour, pos, w) - inst.penalties[v];
      if (gain > best_gain) {
        best_gain = gain;
        best_pos = pos;
      }
    }
    if (best_pos == 0) break;
    prize -= inst.prizes[tour[best_pos]];
    in[tour[best_pos]] = false;
    tour.erase(tour.begin() + static_cast<std::ptrdiff_t>(best_pos));
    ++repairs;
  }
  return finish(Instance{inst}, std::move(tour), repairs);
}

DecodedTour greedy_op(const Heatmap& h, const OpInstance& inst, const DistanceMatrix& w) {
  const std::size_t n = inst.size();
  if (h.size() != n) throw DimensionError("greedy_op: heatmap size differs from instance");
  std::vector<std::size_t> tour{inst.depot};
  std::vector<bool> in(n, false);
  in[inst.depot] = true;
  double length = 0.0;
  int inserted = 0;
  for (;;) {
    std::size_t best = n, best_pos = 0;
    double best_rank = -1.0;
    const std::size_t m = tour.size();
    for (std::size_t v = 0; v < n; ++v) {
      if (in[v]) continue;
      // every insertion point, ranked by the heatmap mass on the two new edges
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t a = tour[k];
        const std::size_t b = tour[(k + 1) % m];
        const double detour = m == 1 ? 2.0 * w(idx(a), idx(v))
                                     : w(idx(a), idx(v)) + w(idx(v), idx(b)) - w(idx(a), idx(b));
        if (length + detour > inst.budget) continue;
        const double support = 0.5 * (h(a, v) + h(v, b));
        const double rank = inst.scores[v] * (support + 1e-6) / std::max(detour, 1e-12);
        if (rank > best_rank) {
          best_rank = rank;
          best = v;
          best_pos = k + 1;
        }
        if (m == 1) break;
      }
    }
    if (best == n) break;
    tour.insert(tour.begin() + static_cast<std::ptrdiff_t>(best_pos), best);
    in[best] = true;
    // the incremental detour can round below B while the summed length does not
    const double exact = tour_length(tour, w);
    if (exact > inst.budget) {
      tour.erase(tour.begin() + static_cast<std::ptrdiff_t>(best_pos));
      continue;
    }
    length = exact;
    ++inserted;
  }
  return finish(Instance{inst}, std::move(tour), inserted);
}

namespace {

struct TwSearch {
  const Heatmap* h;
  const TspTwInstance* inst;
  std::vector<std::size_t> path;
  std::vector<bool> used;
  long budget = 200000;

  bool dfs() {
    const std::size_t n = inst->size();
    if (path.size() == n) return true;
    if (--budget < 0) return false;
    const std::size_t cur = path.back();
    const int t = static_cast<int>(path.size());
    std::vector<std::size_t> order;
    for (std::size_t v = 0; v < n; ++v) {
      if (!used[v] && inst->windows[v].earliest <= t && t <= inst->windows[v].latest) order.push_back(v);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return (*h)(cur, a) > (*h)(cur, b); });
    for (std::size_t v : order) {
      // a node whose window has closed can never be visited
      bool dead = false;
      for (std::size_t u = 0; u < n && !dead; ++u) dead = !used[u] && u != v && inst->windows[u].latest <= t;
      if (dead) return false;
      used[v] = true;
      path.push_back(v);
      if (dfs()) return true;
      path.pop_back();
      used[v] = false;
    }
    return false;
  }
};

}  // namespace

DecodedTour greedy_tsptw(const Heatmap& h, const TspTwInstance& inst, const DistanceMatrix& w) {
  const std::size_t n = inst.size();
  if (h.size() != n) throw DimensionError("greedy_tsptw: heatmap size differs from instance");
  TwSearch search{&h, &inst, {0}, std::vector<bool>(n, false)};
  search.used[0] = true;
  if (static_cast<int>(n) <= inst.horizon && inst.windows[0].earliest <= 0 && search.dfs()) {
    return finish(Instance{inst}, search.path, 0);
  }
  // no time-feasible order found: fall back to the plain greedy cycle
  DecodedTour out = greedy_tsp(h, w);
  out.feasible = check_feasible(out.solution, Instance{inst}).feasible;
  return out;
}

std::vector<std::size_t> two_opt(std::vector<std::size_t> tour, const DistanceMatrix& w, int max_passes) {
  const std::size_t m = tour.size();
  if (m < 4) return tour;
  for (int pass = 0; pass < max_passes; ++pass) {
    bool improved = false;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      for (std::size_t j = i + 2; j < m; ++j) {
        if (i == 0 && j == m - 1) continue;
        const std::size_t a = tour[i], b = tour[i + 1], c = tour[j], d = tour[(j + 1) % m];
        const double delta = w(idx(a), idx(c)) + w(idx(b), idx(d)) - w(idx(a), idx(b)) - w(idx(c), idx(d));
        if (delta < -kImprove) {
          std::reverse(tour.begin() + static_cast<std::ptrdiff_t>(i + 1), tour.begin() + static_cast<std::ptrdiff_t>(j + 1));
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return tour;
}

FeasibilityReport check_feasible(const DiscreteSolution& solution, const Instance& instance) {
  FeasibilityReport r;
  try {
    check_structure(instance, solution);
  } catch (const Error& e) {
    r.feasible = false;
    r.violation = kInf;
    r.message = e.what();
    return r;
  }
  const DistanceMatrix w = distance_matrix(instance);
  std::visit(
      [&](const auto& inst) {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, PctspInstance>) {
          double prize = 0.0;
          for (std::size_t v : solution.tour) prize += inst.prizes[v];
          r.violation = std::max(0.0, inst.prize_threshold - prize);
          if (r.violation > 0.0) r.message = fmt::format("prize {} below threshold {}", prize, inst.prize_threshold);
        } else if constexpr (std::is_same_v<T, OpInstance>) {
          const double len = tour_length(solution.tour, w);
          r.violation = std::max(0.0, len - inst.budget);
          if (r.violation > 0.0) r.message = fmt::format("tour length {} exceeds budget {} by {}", len, inst.budget, r.violation);
        } else if constexpr (std::is_same_v<T, TspTwInstance>) {
          double late = 0.0;
          for (std::size_t k = 0; k < solution.tour.size(); ++k) {
            const auto& tw = inst.windows[solution.tour[k]];
            const int t = static_cast<int>(k);
            if (t < tw.earliest) late += tw.earliest - t;
            if (t > tw.latest) late += t - tw.latest;
          }
          late += std::max(0, static_cast<int>(solution.tour.size()) - inst.horizon);
          r.violation = late;
          if (late > 0.0) r.message = fmt::format("arrival times miss windows by {} steps in total", late);
        }
      },
      instance);
  r.feasible = r.violation == 0.0;
  return r;
}

DecodedTour decode(const Heatmap& h, const Instance& instance, const DecodeOptions& options) {
  const DistanceMatrix w = distance_matrix(instance);
  DecodedTour out = std::visit(
      [&](const auto& inst) -> DecodedTour {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, TspInstance>) return greedy_tsp(h, w);
        else if constexpr (std::is_same_v<T, PctspInstance>) return greedy_pctsp(h, inst, w);
        else if constexpr (std::is_same_v<T, OpInstance>) return greedy_op(h, inst, w);
        else return greedy_tsptw(h, inst, w);
      },
      instance);
  if (options.two_opt && kind_of(instance) != ProblemKind::tsptw) {
    std::vector<std::size_t> better = two_opt(out.solution.tour, w, options.max_two_opt_passes);
    out.solution = DiscreteSolution::from_tour(base_of(instance).size(), std::move(better));
    out.objective = phi_discrete(instance, out.solution);
  }
  return out;
}

}  // namespace difuada
