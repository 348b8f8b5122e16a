#include "difuada/oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "difuada/errors.hpp"
#include "difuada/rng.hpp"

namespace difuada {

namespace {

using Eigen::Index;
constexpr double kInf = std::numeric_limits<double>::infinity();

Index idx(std::size_t v) { return static_cast<Index>(v); }

std::vector<std::size_t> nodes_of(std::uint32_t mask) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < 32; ++v) {
    if (mask >> v & 1U) out.push_back(v);
  }
  return out;
}

std::string mask_string(std::uint32_t mask) {
  std::string s = "{";
  bool first = true;
  for (std::size_t v : nodes_of(mask)) {
    s += fmt::format("{}{}", first ? "" : ",", v);
    first = false;
  }
  return s + "}";
}

}  // namespace

std::string_view to_string(OracleMethod method) {
  switch (method) {
    case OracleMethod::held_karp: return "held-karp";
    case OracleMethod::subset_enum: return "subset-enum";
    case OracleMethod::ils: return "ils";
  }
  return "unknown";
}

RootedSubsetTours::RootedSubsetTours(const DistanceMatrix& w, std::size_t root) : root_(root), w_(&w) {
  const std::size_t n = static_cast<std::size_t>(w.rows());
  if (n > kHeldKarpMaxNodes) {
    throw SizeError(fmt::format("Held-Karp supports at most {} nodes, got {}", kHeldKarpMaxNodes, n));
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (v != root) others_.push_back(v);
  }
  k_ = others_.size();
  const std::size_t subsets = std::size_t{1} << k_;
  dp_.assign(subsets * std::max<std::size_t>(k_, 1), kInf);
  prev_.assign(dp_.size(), static_cast<std::uint8_t>(k_));
  for (std::size_t j = 0; j < k_; ++j) dp_[(std::size_t{1} << j) * k_ + j] = w(idx(root), idx(others_[j]));
  for (std::size_t mask = 1; mask < subsets; ++mask) {
    for (std::size_t j = 0; j < k_; ++j) {
      if (!(mask >> j & 1U)) continue;
      const double base = dp_[mask * k_ + j];
      if (base == kInf) continue;
      for (std::size_t m = 0; m < k_; ++m) {
        if (mask >> m & 1U) continue;
        const std::size_t next = mask | (std::size_t{1} << m);
        const double cand = base + w(idx(others_[j]), idx(others_[m]));
        if (cand < dp_[next * k_ + m]) {
          dp_[next * k_ + m] = cand;
          prev_[next * k_ + m] = static_cast<std::uint8_t>(j);
        }
      }
    }
  }
  cost_.assign(subsets, 0.0);
  for (std::size_t mask = 1; mask < subsets; ++mask) {
    double best = kInf;
    for (std::size_t j = 0; j < k_; ++j) {
      if (mask >> j & 1U) best = std::min(best, dp_[mask * k_ + j] + w(idx(others_[j]), idx(root)));
    }
    cost_[mask] = best;
  }
}

std::vector<std::size_t> RootedSubsetTours::tour(std::uint32_t mask) const {
  std::vector<std::size_t> path;
  if (mask == 0) return {root_};
  const DistanceMatrix& w = *w_;
  std::size_t end = k_;
  double best = kInf;
  for (std::size_t j = 0; j < k_; ++j) {
    if (!(mask >> j & 1U)) continue;
    const double c = dp_[mask * k_ + j] + w(idx(others_[j]), idx(root_));
    if (c < best) {
      best = c;
      end = j;
    }
  }
  std::size_t cur_mask = mask;
  while (end != k_) {
    path.push_back(others_[end]);
    const std::size_t p = prev_[cur_mask * k_ + end];
    cur_mask &= ~(std::size_t{1} << end);
    end = p;
  }
  path.push_back(root_);
  std::reverse(path.begin(), path.end());
  return path;
}

OracleResult held_karp_tsp(const DistanceMatrix& w) {
  const std::size_t n = static_cast<std::size_t>(w.rows());
  if (n < 3 || n > kHeldKarpMaxNodes) {
    throw SizeError(fmt::format("held_karp_tsp requires 3 <= N <= {}, got {}", kHeldKarpMaxNodes, n));
  }
  const RootedSubsetTours tours(w, 0);
  const auto full = static_cast<std::uint32_t>((std::size_t{1} << (n - 1)) - 1);
  OracleResult r;
  r.optimal_value = tours.cost(full);
  r.optimal_solution = DiscreteSolution::from_tour(n, tours.tour(full));
  r.method = OracleMethod::held_karp;
  r.exact = true;
  return r;
}

namespace {

// Tour over `nodes` from a Held-Karp pass on the induced submatrix.
std::pair<double, std::vector<std::size_t>> subset_tour(const DistanceMatrix& w, const std::vector<std::size_t>& nodes) {
  if (nodes.empty()) return {0.0, {}};
  if (nodes.size() == 1) return {0.0, nodes};
  if (nodes.size() == 2) return {2.0 * w(idx(nodes[0]), idx(nodes[1])), nodes};
  const auto k = static_cast<Index>(nodes.size());
  DistanceMatrix sub(k, k);
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) sub(a, b) = w(idx(nodes[static_cast<std::size_t>(a)]), idx(nodes[static_cast<std::size_t>(b)]));
  }
  const RootedSubsetTours tours(sub, 0);
  const auto full = static_cast<std::uint32_t>((std::size_t{1} << (nodes.size() - 1)) - 1);
  std::vector<std::size_t> tour;
  for (std::size_t local : tours.tour(full)) tour.push_back(nodes[local]);
  return {tours.cost(full), tour};
}

}  // namespace

double tsp_subset_cost(const DistanceMatrix& w, std::uint32_t mask) {
  return subset_tour(w, nodes_of(mask)).first;
}

std::vector<std::size_t> tsp_subset_tour(const DistanceMatrix& w, std::uint32_t mask) {
  return subset_tour(w, nodes_of(mask)).second;
}

OracleResult brute_pctsp(const PctspInstance& inst) {
  const std::size_t n = inst.size();
  if (n > kSubsetEnumMaxNodes) {
    throw SizeError(fmt::format("brute_pctsp supports N <= {}, got {}", kSubsetEnumMaxNodes, n));
  }
  const DistanceMatrix w = distance_matrix(inst.base);
  const RootedSubsetTours tours(w, inst.depot);
  const auto& others = tours.others();
  double best = kInf;
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 0; mask < tours.subset_count(); ++mask) {
    double prize = inst.prizes[inst.depot];
    double penalty = 0.0;
    for (std::size_t b = 0; b < others.size(); ++b) {
      if (mask >> b & 1U) {
        prize += inst.prizes[others[b]];
      } else {
        penalty += inst.penalties[others[b]];
      }
    }
    if (prize < inst.prize_threshold) continue;
    const double value = tours.cost(mask) + penalty;
    if (value < best) {
      best = value;
      best_mask = mask;
    }
  }
  if (best == kInf) throw InfeasibleInstanceError("brute_pctsp: no visit set reaches the prize threshold");
  OracleResult r;
  r.optimal_value = best;
  r.optimal_solution = DiscreteSolution::from_tour(n, tours.tour(best_mask));
  r.method = OracleMethod::subset_enum;
  r.exact = true;
  return r;
}

OracleResult brute_op(const OpInstance& inst) {
  const std::size_t n = inst.size();
  if (n > kSubsetEnumMaxNodes) {
    throw SizeError(fmt::format("brute_op supports N <= {}, got {}", kSubsetEnumMaxNodes, n));
  }
  const DistanceMatrix w = distance_matrix(inst.base);
  const RootedSubsetTours tours(w, inst.depot);
  const auto& others = tours.others();
  double best_score = -kInf;
  double best_len = kInf;
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 0; mask < tours.subset_count(); ++mask) {
    const double len = tours.cost(mask);
    if (len > inst.budget) continue;
    double score = inst.scores[inst.depot];
    for (std::size_t b = 0; b < others.size(); ++b) {
      if (mask >> b & 1U) score += inst.scores[others[b]];
    }
    if (score > best_score || (score == best_score && len < best_len)) {
      best_score = score;
      best_len = len;
      best_mask = mask;
    }
  }
  OracleResult r;
  r.optimal_value = best_score;
  r.optimal_solution = DiscreteSolution::from_tour(n, tours.tour(best_mask));
  r.method = OracleMethod::subset_enum;
  r.exact = true;
  return r;
}

double marginal_decrease(const DistanceMatrix& w, std::uint32_t subset) {
  const std::size_t n = static_cast<std::size_t>(w.rows());
  if (n > kHeldKarpMaxNodes) throw SizeError("marginal_decrease: too many nodes");
  const auto all = static_cast<std::uint32_t>((std::size_t{1} << n) - 1);
  if ((subset & ~all) != 0) throw SizeError("marginal_decrease: subset references missing nodes");
  if (subset == all) throw SizeError("marginal_decrease: subset must be a proper subset of V");
  if (subset == 0) return 0.0;
  return tsp_subset_cost(w, all) - tsp_subset_cost(w, all & ~subset);
}

TheoremReport verify_theorem_pctsp(const PctspInstance& instance) {
  if (instance.size() > 10) throw SizeError("verify_theorem_pctsp supports N <= 10");
  PctspInstance inst = instance;
  inst.prize_threshold = 0.0;
  const std::size_t n = inst.size();
  const DistanceMatrix w = distance_matrix(inst.base);
  const auto all = static_cast<std::uint32_t>((std::size_t{1} << n) - 1);
  const auto depot_bit = static_cast<std::uint32_t>(1U << inst.depot);

  TheoremReport report;
  report.instance_id = inst.base.id;
  const OracleResult oracle = brute_pctsp(inst);

  const double tsp_all = tsp_subset_cost(w, all);
  double min_term = kInf;
  std::uint32_t argmin = 0;
  for (std::uint32_t s = 0; s <= all; ++s) {
    if (s & depot_bit) continue;
    double pen = 0.0;
    for (std::size_t v : nodes_of(s)) pen += inst.penalties[v];
    const double term = pen - marginal_decrease(w, s);
    if (term < min_term) {
      min_term = term;
      argmin = s;
    }
  }
  const double predicted = tsp_all + min_term;

  std::uint32_t skipped = all;
  for (std::size_t v = 0; v < n; ++v) {
    if (oracle.optimal_solution.visited[v]) skipped &= ~(1U << v);
  }
  double skipped_pen = 0.0;
  for (std::size_t v : nodes_of(skipped)) skipped_pen += inst.penalties[v];
  const double oracle_term = skipped_pen - marginal_decrease(w, skipped);
  const double oracle_len = tour_length(oracle.optimal_solution.tour, w);
  const double sub_opt = tsp_subset_cost(w, all & ~skipped);

  const bool value_ok = std::abs(oracle.optimal_value - predicted) <= kTheoremTolerance;
  const bool argmin_ok = oracle_term <= min_term + kTheoremTolerance;
  const bool tour_ok = std::abs(oracle_len - sub_opt) <= kTheoremTolerance;
  report.passed = value_ok && argmin_ok && tour_ok;
  report.detail = fmt::format(
      "oracle={:.12f} TSP(V)+min[p(S)-D(S)]={:.12f} argmin S={} oracle S={} term(oracle S)={:.12f} "
      "oracle tour={:.12f} TSP(V\\S)={:.12f}",
      oracle.optimal_value, predicted, mask_string(argmin), mask_string(skipped), oracle_term, oracle_len,
      sub_opt);
  if (!report.passed) report.counterexample = format_instance(Instance{inst});
  return report;
}

TheoremReport verify_theorem_op(const OpInstance& inst) {
  if (inst.size() > 10) throw SizeError("verify_theorem_op supports N <= 10");
  const std::size_t n = inst.size();
  double common = -1.0;
  for (std::size_t v = 0; v < n; ++v) {
    if (v == inst.depot) continue;
    if (common < 0.0) common = inst.scores[v];
    if (inst.scores[v] != common) throw ConfigError("verify_theorem_op requires identical scores");
  }
  const DistanceMatrix w = distance_matrix(inst.base);
  const auto all = static_cast<std::uint32_t>((std::size_t{1} << n) - 1);
  const auto depot_bit = static_cast<std::uint32_t>(1U << inst.depot);

  TheoremReport report;
  report.instance_id = inst.base.id;
  const OracleResult oracle = brute_op(inst);
  std::size_t oracle_count = 0;
  std::uint32_t skipped = all;
  for (std::size_t v = 0; v < n; ++v) {
    if (oracle.optimal_solution.visited[v]) {
      ++oracle_count;
      skipped &= ~(1U << v);
    }
  }

  const double slack = tsp_subset_cost(w, all) - inst.budget;
  double min_delta = kInf;
  for (std::uint32_t s = 0; s < all; ++s) {
    if (s & depot_bit) continue;
    const double d = marginal_decrease(w, s);
    if (d >= slack - kTheoremTolerance) min_delta = std::min(min_delta, d);
  }
  // Visit counts reached by the minimising sets.
  std::vector<std::size_t> argmin_counts;
  std::vector<std::string> argmin_sets;
  for (std::uint32_t s = 0; s < all; ++s) {
    if (s & depot_bit) continue;
    const double d = marginal_decrease(w, s);
    if (d >= slack - kTheoremTolerance && std::abs(d - min_delta) <= kTheoremTolerance) {
      argmin_counts.push_back(n - static_cast<std::size_t>(std::popcount(s)));
      argmin_sets.push_back(mask_string(s));
    }
  }
  const bool count_ok =
      std::find(argmin_counts.begin(), argmin_counts.end(), oracle_count) != argmin_counts.end();
  const double oracle_len = tour_length(oracle.optimal_solution.tour, w);
  const bool tour_ok = std::abs(oracle_len - tsp_subset_cost(w, all & ~skipped)) <= kTheoremTolerance;
  report.passed = count_ok && tour_ok;
  std::string sets;
  for (std::size_t k = 0; k < argmin_sets.size(); ++k) {
    sets += fmt::format("{}{}(visits {})", k ? " " : "", argmin_sets[k], argmin_counts[k]);
  }
  report.detail = fmt::format(
      "oracle visits {} (S={}, tour {:.12f}); TSP(V)-B={:.12f}; min Delta={:.12f} at {}", oracle_count,
      mask_string(skipped), oracle_len, slack, min_delta, sets);
  if (!report.passed) report.counterexample = format_instance(Instance{inst});
  return report;
}

Eigen::MatrixXd node_weighted_reduction(const std::vector<double>& scores, const DistanceMatrix& w) {
  const std::size_t n = static_cast<std::size_t>(w.rows());
  if (scores.size() != n) throw DimensionError("node_weighted_reduction: score count differs from N");
  if (n > kHeldKarpMaxNodes) throw SizeError("node_weighted_reduction: too many nodes");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("node_weighted_reduction: non-finite score");
  }
  const auto m = static_cast<Index>(2 * n);
  Eigen::MatrixXd arcs = Eigen::MatrixXd::Constant(m, m, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    arcs(idx(2 * i), idx(2 * i + 1)) = scores[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) arcs(idx(2 * i + 1), idx(2 * j)) = w(idx(i), idx(j));
    }
  }
  return arcs;
}

namespace {

void atsp_dfs(const Eigen::MatrixXd& arcs, std::vector<bool>& used, std::size_t cur, std::size_t depth,
              double cost, double& best) {
  const auto m = static_cast<std::size_t>(arcs.rows());
  if (depth == m) {
    const double back = arcs(idx(cur), 0);
    if (back != kInf) best = std::min(best, cost + back);
    return;
  }
  for (std::size_t next = 1; next < m; ++next) {
    if (used[next]) continue;
    const double a = arcs(idx(cur), idx(next));
    if (a == kInf) continue;
    used[next] = true;
    atsp_dfs(arcs, used, next, depth + 1, cost + a, best);
    used[next] = false;
  }
}

}  // namespace

double brute_force_atsp(const Eigen::MatrixXd& arcs) {
  const auto m = static_cast<std::size_t>(arcs.rows());
  if (m > 14) throw SizeError("brute_force_atsp supports at most 14 nodes");
  if (m == 0) return 0.0;
  std::vector<bool> used(m, false);
  used[0] = true;
  double best = kInf;
  atsp_dfs(arcs, used, 0, 1, 0.0, best);
  return best;
}

double brute_node_weighted_tsp(const std::vector<double>& scores, const DistanceMatrix& w) {
  const std::size_t n = static_cast<std::size_t>(w.rows());
  if (n > 9) throw SizeError("brute_node_weighted_tsp supports N <= 9");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = kInf;
  do {
    double cost = 0.0;
    for (std::size_t k = 0; k < n; ++k) cost += scores[perm[k]] + w(idx(perm[k]), idx(perm[(k + 1) % n]));
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin() + 1, perm.end()));
  return best;
}

double TimeExpandedGraph::replica_energy(const std::vector<double>& visits) const {
  if (visits.size() != replicas.size()) throw DimensionError("replica_energy: wrong visit vector length");
  double energy = 0.0;
  for (const auto& group : replicas_of) {
    double total = 0.0;
    for (std::size_t r : group) total += visits[r];
    energy += (total - 1.0) * (total - 1.0);
  }
  return energy;
}

std::vector<double> TimeExpandedGraph::replica_energy_grad(const std::vector<double>& visits) const {
  if (visits.size() != replicas.size()) throw DimensionError("replica_energy_grad: wrong visit vector length");
  std::vector<double> grad(visits.size(), 0.0);
  for (const auto& group : replicas_of) {
    double total = 0.0;
    for (std::size_t r : group) total += visits[r];
    for (std::size_t r : group) grad[r] = 2.0 * (total - 1.0);
  }
  return grad;
}

TimeExpandedGraph tsptw_expand(const TspTwInstance& inst) {
  const std::size_t n = inst.size();
  if (n > 5 || inst.horizon > 12) {
    throw SizeError(fmt::format("tsptw_expand supports N <= 5 and H <= 12, got N={} H={}", n, inst.horizon));
  }
  TimeExpandedGraph g;
  g.replicas_of.resize(n);
  // replica index by (node, time)
  std::vector<std::vector<long>> index(n, std::vector<long>(static_cast<std::size_t>(inst.horizon) + 1, -1));
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = inst.windows[i].earliest; t <= inst.windows[i].latest; ++t) {
      index[i][static_cast<std::size_t>(t)] = static_cast<long>(g.replicas.size());
      g.replicas_of[i].push_back(g.replicas.size());
      g.replicas.push_back(Replica{i, t});
    }
  }
  g.out_arcs.resize(g.replicas.size());
  for (std::size_t r = 0; r < g.replicas.size(); ++r) {
    const auto [i, t] = g.replicas[r];
    if (t + 1 > inst.horizon) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const long target = index[j][static_cast<std::size_t>(t + 1)];
      if (target < 0) continue;
      g.arcs.emplace_back(r, static_cast<std::size_t>(target));
      g.out_arcs[r].push_back(static_cast<std::size_t>(target));
    }
  }
  return g;
}

namespace {

void expanded_dfs(const TimeExpandedGraph& g, const DistanceMatrix& w, std::vector<bool>& used, std::size_t replica,
                  std::size_t count, double length, double& best) {
  const std::size_t n = used.size();
  const std::size_t node = g.replicas[replica].node;
  if (count == n) {
    best = std::min(best, length + w(idx(node), 0));
    return;
  }
  for (std::size_t next : g.out_arcs[replica]) {
    const std::size_t v = g.replicas[next].node;
    if (used[v]) continue;
    used[v] = true;
    expanded_dfs(g, w, used, next, count + 1, length + w(idx(node), idx(v)), best);
    used[v] = false;
  }
}

}  // namespace

double brute_tsptw_expanded(const TspTwInstance& inst, const TimeExpandedGraph& g) {
  const std::size_t n = inst.size();
  if (static_cast<int>(n) > inst.horizon) return kInf;
  const DistanceMatrix w = distance_matrix(inst.base);
  double best = kInf;
  for (std::size_t r : g.replicas_of[0]) {
    if (g.replicas[r].time != 0) continue;
    std::vector<bool> used(n, false);
    used[0] = true;
    expanded_dfs(g, w, used, r, 1, 0.0, best);
  }
  return best;
}

namespace {

std::pair<double, std::vector<std::size_t>> tsptw_permutation_search(const TspTwInstance& inst) {
  const std::size_t n = inst.size();
  if (n > 10) throw SizeError("TSP-TW enumeration supports N <= 10");
  const DistanceMatrix w = distance_matrix(inst.base);
  double best = kInf;
  std::vector<std::size_t> best_tour;
  if (static_cast<int>(n) > inst.horizon) return {best, best_tour};
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    bool ok = true;
    for (std::size_t k = 0; k < n && ok; ++k) {
      const auto& tw = inst.windows[perm[k]];
      const int t = static_cast<int>(k);
      ok = tw.earliest <= t && t <= tw.latest;
    }
    if (!ok) continue;
    const double len = tour_length(perm, w);
    if (len < best) {
      best = len;
      best_tour = perm;
    }
  } while (std::next_permutation(perm.begin() + 1, perm.end()));
  return {best, best_tour};
}

}  // namespace

double brute_tsptw_permutations(const TspTwInstance& inst) { return tsptw_permutation_search(inst).first; }

namespace {

// Mutable PCTSP route used by the local search.
class PctspRoute {
 public:
  PctspRoute(const PctspInstance& inst, const DistanceMatrix& w) : inst_(&inst), w_(&w) {
    in_.assign(inst.size(), false);
    tour_.push_back(inst.depot);
    in_[inst.depot] = true;
  }

  const std::vector<std::size_t>& tour() const { return tour_; }
  bool contains(std::size_t v) const { return in_[v]; }

  double prize() const {
    double p = 0.0;
    for (std::size_t v : tour_) p += inst_->prizes[v];
    return p;
  }

  double objective() const {
    double value = tour_length(tour_, *w_);
    for (std::size_t v = 0; v < in_.size(); ++v) {
      if (!in_[v]) value += inst_->penalties[v];
    }
    return value;
  }

  // Cheapest insertion position and its added length.
  std::pair<std::size_t, double> best_insertion(std::size_t v) const {
    const DistanceMatrix& w = *w_;
    if (tour_.size() == 1) return {1, 2.0 * w(idx(tour_[0]), idx(v))};
    std::size_t best_pos = 1;
    double best = kInf;
    for (std::size_t k = 0; k < tour_.size(); ++k) {
      const std::size_t a = tour_[k];
      const std::size_t b = tour_[(k + 1) % tour_.size()];
      const double delta = w(idx(a), idx(v)) + w(idx(v), idx(b)) - w(idx(a), idx(b));
      if (delta < best) {
        best = delta;
        best_pos = k + 1;
      }
    }
    return {best_pos, best};
  }

  double removal_saving(std::size_t pos) const {
    const DistanceMatrix& w = *w_;
    const std::size_t m = tour_.size();
    const std::size_t v = tour_[pos];
    const std::size_t a = tour_[(pos + m - 1) % m];
    const std::size_t b = tour_[(pos + 1) % m];
    if (m == 2) return 2.0 * w(idx(a), idx(v));
    return w(idx(a), idx(v)) + w(idx(v), idx(b)) - w(idx(a), idx(b));
  }

  void insert(std::size_t v, std::size_t pos) {
    tour_.insert(tour_.begin() + static_cast<std::ptrdiff_t>(pos), v);
    in_[v] = true;
  }

  void remove_at(std::size_t pos) {
    in_[tour_[pos]] = false;
    tour_.erase(tour_.begin() + static_cast<std::ptrdiff_t>(pos));
  }

  std::vector<std::size_t>& mutable_tour() { return tour_; }

 private:
  const PctspInstance* inst_;
  const DistanceMatrix* w_;
  std::vector<std::size_t> tour_;
  std::vector<bool> in_;
};

constexpr double kImprove = 1e-12;

bool two_opt_pass(std::vector<std::size_t>& tour, const DistanceMatrix& w) {
  const std::size_t m = tour.size();
  if (m < 4) return false;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    for (std::size_t j = i + 2; j < m; ++j) {
      if (i == 0 && j == m - 1) continue;
      const std::size_t a = tour[i], b = tour[i + 1], c = tour[j], d = tour[(j + 1) % m];
      const double delta = w(idx(a), idx(c)) + w(idx(b), idx(d)) - w(idx(a), idx(b)) - w(idx(c), idx(d));
      if (delta < -kImprove) {
        std::reverse(tour.begin() + static_cast<std::ptrdiff_t>(i + 1), tour.begin() + static_cast<std::ptrdiff_t>(j + 1));
        return true;
      }
    }
  }
  return false;
}

bool try_add(PctspRoute& route, const PctspInstance& inst) {
  std::size_t best_v = inst.size();
  std::size_t best_pos = 0;
  double best_gain = kImprove;
  for (std::size_t v = 0; v < inst.size(); ++v) {
    if (route.contains(v)) continue;
    const auto [pos, cost] = route.best_insertion(v);
    const double gain = inst.penalties[v] - cost;
    if (gain > best_gain) {
      best_gain = gain;
      best_v = v;
      best_pos = pos;
    }
  }
  if (best_v == inst.size()) return false;
  route.insert(best_v, best_pos);
  return true;
}

bool try_drop(PctspRoute& route, const PctspInstance& inst) {
  const double prize = route.prize();
  std::size_t best_pos = 0;
  double best_gain = kImprove;
  const auto& tour = route.tour();
  for (std::size_t pos = 1; pos < tour.size(); ++pos) {
    const std::size_t v = tour[pos];
    if (prize - inst.prizes[v] < inst.prize_threshold) continue;
    const double gain = route.removal_saving(pos) - inst.penalties[v];
    if (gain > best_gain) {
      best_gain = gain;
      best_pos = pos;
    }
  }
  if (best_pos == 0) return false;
  route.remove_at(best_pos);
  return true;
}

void local_search(PctspRoute& route, const PctspInstance& inst, const DistanceMatrix& w) {
  for (;;) {
    while (two_opt_pass(route.mutable_tour(), w)) {
    }
    if (try_add(route, inst)) continue;
    if (try_drop(route, inst)) continue;
    break;
  }
}

PctspRoute construct_pctsp(const PctspInstance& inst, const DistanceMatrix& w) {
  PctspRoute route(inst, w);
  while (route.prize() < inst.prize_threshold) {
    std::size_t best_v = inst.size(), best_pos = 0;
    double best_ratio = -1.0;
    for (std::size_t v = 0; v < inst.size(); ++v) {
      if (route.contains(v)) continue;
      const auto [pos, cost] = route.best_insertion(v);
      const double ratio = inst.prizes[v] / std::max(cost, 1e-12);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best_v = v;
        best_pos = pos;
      }
    }
    if (best_v == inst.size()) break;
    route.insert(best_v, best_pos);
  }
  while (try_add(route, inst)) {
  }
  return route;
}

}  // namespace

OracleResult ils_pctsp(const PctspInstance& inst, int iterations, std::uint64_t seed) {
  const DistanceMatrix w = distance_matrix(inst.base);
  Rng rng(derive_seed(seed, 0x115));
  PctspRoute best = construct_pctsp(inst, w);
  if (iterations > 0) local_search(best, inst, w);
  double best_value = best.objective();

  for (int it = 0; it < iterations; ++it) {
    PctspRoute cand = best;
    auto& tour = cand.mutable_tour();
    const std::size_t m = tour.size();
    if (m >= 8) {
      // Double bridge over the non-depot positions.
      std::vector<std::size_t> cuts;
      while (cuts.size() < 3) {
        const std::size_t c = 1 + rng.below(m - 1);
        if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
      }
      std::sort(cuts.begin(), cuts.end());
      std::vector<std::size_t> next(tour.begin(), tour.begin() + static_cast<std::ptrdiff_t>(cuts[0]));
      next.insert(next.end(), tour.begin() + static_cast<std::ptrdiff_t>(cuts[2]), tour.end());
      next.insert(next.end(), tour.begin() + static_cast<std::ptrdiff_t>(cuts[1]), tour.begin() + static_cast<std::ptrdiff_t>(cuts[2]));
      next.insert(next.end(), tour.begin() + static_cast<std::ptrdiff_t>(cuts[0]), tour.begin() + static_cast<std::ptrdiff_t>(cuts[1]));
      tour = std::move(next);
    } else if (m >= 4) {
      const std::size_t a = 1 + rng.below(m - 1);
      const std::size_t b = 1 + rng.below(m - 1);
      std::reverse(tour.begin() + static_cast<std::ptrdiff_t>(std::min(a, b)),
                   tour.begin() + static_cast<std::ptrdiff_t>(std::max(a, b) + 1));
    }
    const std::size_t toggles = 1 + rng.below(2);
    for (std::size_t k = 0; k < toggles; ++k) {
      const std::size_t v = rng.below(inst.size());
      if (v == inst.depot) continue;
      if (cand.contains(v)) {
        const auto& t = cand.tour();
        const auto pos = static_cast<std::size_t>(std::find(t.begin(), t.end(), v) - t.begin());
        if (cand.prize() - inst.prizes[v] >= inst.prize_threshold) cand.remove_at(pos);
      } else {
        const auto [pos, cost] = cand.best_insertion(v);
        (void)cost;
        cand.insert(v, pos);
      }
    }
    local_search(cand, inst, w);
    const double value = cand.objective();
    if (value < best_value - kImprove) {
      best = std::move(cand);
      best_value = value;
    }
  }
  OracleResult r;
  r.optimal_value = best_value;
  r.optimal_solution = DiscreteSolution::from_tour(inst.size(), best.tour());
  r.method = OracleMethod::ils;
  r.exact = false;
  return r;
}

OracleResult solve_oracle(const Instance& instance, int ils_iterations, std::uint64_t seed) {
  const std::size_t n = base_of(instance).size();
  switch (kind_of(instance)) {
    case ProblemKind::tsp:
      return held_karp_tsp(distance_matrix(instance));
    case ProblemKind::pctsp: {
      const auto& inst = std::get<PctspInstance>(instance);
      return n <= kSubsetEnumMaxNodes ? brute_pctsp(inst) : ils_pctsp(inst, ils_iterations, seed);
    }
    case ProblemKind::op: {
      OracleResult r = brute_op(std::get<OpInstance>(instance));
      return r;
    }
    case ProblemKind::tsptw: {
      const auto [value, tour] = tsptw_permutation_search(std::get<TspTwInstance>(instance));
      if (tour.empty()) throw InfeasibleInstanceError("TSP-TW instance has no time-feasible tour");
      OracleResult r;
      r.optimal_value = value;
      r.optimal_solution = DiscreteSolution::from_tour(n, tour);
      r.method = OracleMethod::subset_enum;
      r.exact = true;
      return r;
    }
  }
  throw ConfigError("solve_oracle: unknown problem kind");
}

}  // namespace difuada
