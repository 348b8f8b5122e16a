#include <doctest.h>

#include <bit>
#include <cmath>

#include "checks.hpp"
#include "difuada/errors.hpp"
#include "difuada/oracles.hpp"
#include "support.hpp"

using namespace difuada;

namespace {

TspInstance unit_square() {
  TspInstance sq;
  sq.points = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  return sq;
}

}  // namespace

TEST_SUITE("oracles") {

TEST_CASE("held_karp basics") {
  const OracleResult sq = held_karp_tsp(distance_matrix(unit_square()));
  CHECK(sq.optimal_value == doctest::Approx(4.0));
  CHECK(sq.exact);
  const TspInstance tri = gen_tsp(3, 4);
  const DistanceMatrix w = distance_matrix(tri);
  CHECK(held_karp_tsp(w).optimal_value == doctest::Approx(w(0, 1) + w(1, 2) + w(0, 2)));
  CHECK_THROWS_AS(held_karp_tsp(distance_matrix(gen_tsp(17, 1))), SizeError);
}

TEST_CASE("held_karp equals permutation enumeration") {
  const checks::Outcome r = checks::held_karp_vs_permutations(200, 5);
  CHECK_MESSAGE(r.passed, r.detail);
}

TEST_CASE("subset oracles equal factorial enumeration") {
  const checks::Outcome p = checks::subset_oracles_vs_enumeration(ProblemKind::pctsp, 100, 6);
  CHECK_MESSAGE(p.passed, p.detail);
  const checks::Outcome o = checks::subset_oracles_vs_enumeration(ProblemKind::op, 100, 7);
  CHECK_MESSAGE(o.passed, o.detail);
}

TEST_CASE("brute_pctsp fixtures") {
  PctspInstance p = gen_pctsp(7, 2);
  p.prize_threshold = 0.0;
  for (double& x : p.penalties) x = 0.0;
  const OracleResult free = brute_pctsp(p);
  CHECK(free.optimal_value == 0.0);
  CHECK(free.optimal_solution.tour == std::vector<std::size_t>{0});

  for (std::size_t v = 1; v < 7; ++v) p.penalties[v] = 100.0;
  CHECK(brute_pctsp(p).optimal_value == doctest::Approx(held_karp_tsp(distance_matrix(p.base)).optimal_value));
  CHECK_THROWS_AS(brute_pctsp(gen_pctsp(13, 1)), SizeError);
}

TEST_CASE("brute_op fixtures") {
  OpInstance o = gen_op(7, 3);
  const DistanceMatrix w = distance_matrix(o.base);
  o.budget = 1.9 * w.row(0).tail(6).minCoeff();
  CHECK(brute_op(o).optimal_value == 0.0);
  o.budget = held_karp_tsp(w).optimal_value;
  double total = 0.0;
  for (double s : o.scores) total += s;
  CHECK(brute_op(o).optimal_value == doctest::Approx(total));
}

TEST_CASE("marginal decrease") {
  const DistanceMatrix w = distance_matrix(unit_square());
  CHECK(marginal_decrease(w, 0) == 0.0);
  CHECK(marginal_decrease(w, 1U << 2) == doctest::Approx(4.0 - (2.0 + std::sqrt(2.0))));
  // degenerate remainders: one node is 0, two nodes are out and back
  CHECK(marginal_decrease(w, 0b1110) == doctest::Approx(4.0));
  CHECK(marginal_decrease(w, 0b1100) == doctest::Approx(2.0));

  for (std::uint64_t s = 0; s < 10; ++s) {
    const DistanceMatrix m = distance_matrix(gen_tsp(7, s));
    for (std::uint32_t mask = 0; mask < (1U << 7) - 1; ++mask) CHECK(marginal_decrease(m, mask) >= -1e-12);
  }
}

TEST_CASE("marginal decrease monotonicity is measured") {
  // not a theorem; count violations and report them
  int pairs = 0, violations = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const DistanceMatrix m = distance_matrix(gen_tsp(7, s));
    const std::uint32_t full = (1U << 7) - 1;
    for (std::uint32_t a = 0; a < full; ++a) {
      for (std::size_t v = 0; v < 7; ++v) {
        const std::uint32_t b = a | (1U << v);
        if (b == a || b == full) continue;
        ++pairs;
        violations += marginal_decrease(m, a) > marginal_decrease(m, b) + 1e-12;
      }
    }
  }
  MESSAGE("superset monotonicity violated on ", violations, " of ", pairs, " single-node extensions");
  CHECK(pairs > 0);
}

TEST_CASE("pctsp theorem holds on random instances") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    PctspInstance p = gen_pctsp(7, derive_seed(99, s));
    p.prize_threshold = 0.0;
    const TheoremReport r = verify_theorem_pctsp(p);
    CHECK_MESSAGE(r.passed, r.detail);
  }
}

TEST_CASE("pctsp theorem fixtures") {
  PctspInstance p = gen_pctsp(6, 1);
  p.prize_threshold = 0.0;
  for (std::size_t v = 1; v < 6; ++v) p.penalties[v] = 100.0;
  CHECK(verify_theorem_pctsp(p).passed);

  // a free, remote node is dropped
  p.base.points.push_back({0.99, 0.99});
  p.base.points[0] = {0.0, 0.0};
  p.prizes.push_back(0.0);
  p.penalties.push_back(0.0);
  const TheoremReport r = verify_theorem_pctsp(p);
  CHECK(r.passed);
  CHECK(!brute_pctsp(p).optimal_solution.visited[6]);
}

TEST_CASE("op theorem fixtures") {
  OpInstance o = gen_op(6, 4);
  for (std::size_t v = 1; v < 6; ++v) o.scores[v] = 1.0;
  const double full = held_karp_tsp(distance_matrix(o.base)).optimal_value;
  o.budget = full;
  CHECK(verify_theorem_op(o).passed);
  o.budget = full - 1e-3;
  const TheoremReport tight = verify_theorem_op(o);
  CHECK_MESSAGE(tight.passed, tight.detail);
  const auto visited = brute_op(o).optimal_solution.visited;
  CHECK(std::count(visited.begin(), visited.end(), true) == 5);

  o.scores[2] = 0.5;
  CHECK_THROWS_AS(verify_theorem_op(o), ConfigError);
}

TEST_CASE("op theorem counterexample is detected") {
  // min Delta above the slack picks a larger removal set than the best tour needs
  OpInstance o = gen_op(7, derive_seed(0, 0x0B000 + 3));
  for (std::size_t v = 1; v < 7; ++v) o.scores[v] = 1.0;
  const TheoremReport r = verify_theorem_op(o);
  CHECK(!r.passed);
  CHECK(!r.counterexample.empty());
  const OracleResult best = brute_op(o);
  CHECK(best.optimal_value == doctest::Approx(4.0));
  MESSAGE(r.detail);
}

TEST_CASE("node weighted reduction") {
  for (std::uint64_t s = 0; s < 15; ++s) {
    const std::size_t n = 3 + s % 3;
    const DistanceMatrix w = distance_matrix(gen_tsp(n, s));
    std::vector<double> zeros(n, 0.0);
    CHECK(brute_force_atsp(node_weighted_reduction(zeros, w)) == doctest::Approx(held_karp_tsp(w).optimal_value).epsilon(1e-12));

    Rng rng(s);
    std::vector<double> scores(n);
    for (double& x : scores) x = rng.uniform(-1.0, 1.0);
    const double direct = brute_node_weighted_tsp(scores, w);
    CHECK(std::abs(brute_force_atsp(node_weighted_reduction(scores, w)) - direct) <= 1e-9);
    // a constant shift moves every tour by the same total
    double total = 0.0;
    for (double x : scores) total += x;
    CHECK(direct == doctest::Approx(held_karp_tsp(w).optimal_value + total).epsilon(1e-12));
  }
}

TEST_CASE("time expanded graph") {
  GeneratorConfig cfg;
  cfg.tw_horizon = 5;
  cfg.tw_slack = 5;
  const TspTwInstance open = gen_tsptw(4, 2, cfg);
  const TimeExpandedGraph g = tsptw_expand(open);
  // every node has a replica at each of t = 0..H
  for (const auto& reps : g.replicas_of) CHECK(reps.size() == 6);
  CHECK(brute_tsptw_expanded(open, g) == doctest::Approx(held_karp_tsp(distance_matrix(open.base)).optimal_value));

  std::vector<double> visits(g.replicas.size(), 0.0);
  for (const auto& reps : g.replicas_of) visits[reps[1]] = 1.0;
  CHECK(g.replica_energy(visits) == 0.0);
  visits[g.replicas_of[0][2]] = 1.0;
  CHECK(g.replica_energy(visits) == doctest::Approx(1.0));
  const auto grad = g.replica_energy_grad(visits);
  CHECK(grad[g.replicas_of[0][2]] == doctest::Approx(2.0));
  CHECK(grad[g.replicas_of[1][1]] == 0.0);

  for (std::uint64_t s = 0; s < 25; ++s) {
    GeneratorConfig c;
    c.tw_slack = 1 + static_cast<int>(s % 3);
    const TspTwInstance inst = gen_tsptw(4 + s % 2, s, c);
    CHECK(std::abs(brute_tsptw_expanded(inst, tsptw_expand(inst)) - brute_tsptw_permutations(inst)) <= 1e-9);
  }
}

TEST_CASE("ils_pctsp") {
  const PctspInstance p = gen_pctsp(10, 3);
  const OracleResult zero = ils_pctsp(p, 0, 1);
  CHECK(!zero.exact);
  CHECK(ils_pctsp(p, 200, 4).optimal_value == ils_pctsp(p, 200, 4).optimal_value);
  CHECK(ils_pctsp(p, 200, 4).optimal_value <= zero.optimal_value + 1e-12);

  double gap_sum = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const PctspInstance inst = gen_pctsp(8 + s % 3, derive_seed(31, s));
    const double opt = brute_pctsp(inst).optimal_value;
    const double got = ils_pctsp(inst, 1000, s).optimal_value;
    CHECK(got >= opt - 1e-9);
    gap_sum += (got / opt - 1.0) * 100.0;
  }
  MESSAGE("ils mean gap ", gap_sum / 100.0, "%");
  CHECK(gap_sum / 100.0 <= 2.0);
}

}  // TEST_SUITE
