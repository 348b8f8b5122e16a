#include "difuada/verify.hpp"

#include <cmath>

#include <fmt/format.h>

#include "difuada/instances.hpp"
#include "difuada/oracles.hpp"
#include "difuada/rng.hpp"

namespace difuada {

namespace {

bool same_value(double a, double b) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= kTheoremTolerance;
}

void record(VerifyLine& line, bool ok, const std::string& what) {
  ++line.cases;
  if (ok) return;
  ++line.failures;
  if (line.detail.empty()) line.detail = what;
}

}  // namespace

std::vector<VerifyLine> run_verify(std::uint64_t seed, const VerifyCounts& counts) {
  std::vector<VerifyLine> out;

  VerifyLine pctsp;
  pctsp.name = "theorem-pctsp";
  for (int i = 0; i < counts.theorem; ++i) {
    PctspInstance inst = gen_pctsp(7, derive_seed(seed, 0x7C000 + static_cast<std::uint64_t>(i)));
    inst.base.id = fmt::format("pctsp-7-{:03d}", i);
    inst.prize_threshold = 0.0;
    const TheoremReport r = verify_theorem_pctsp(inst);
    record(pctsp, r.passed, fmt::format("{}: {}\n{}", r.instance_id, r.detail, r.counterexample));
  }
  out.push_back(pctsp);

  VerifyLine op;
  op.name = "theorem-op";
  for (int i = 0; i < counts.theorem; ++i) {
    OpInstance inst = gen_op(7, derive_seed(seed, 0x0B000 + static_cast<std::uint64_t>(i)));
    inst.base.id = fmt::format("op-7-{:03d}", i);
    for (std::size_t v = 0; v < inst.size(); ++v) inst.scores[v] = v == inst.depot ? 0.0 : 1.0;
    const TheoremReport r = verify_theorem_op(inst);
    record(op, r.passed, fmt::format("{}: {}\n{}", r.instance_id, r.detail, r.counterexample));
  }
  out.push_back(op);

  VerifyLine nw;
  nw.name = "node-weighted-reduction";
  for (int i = 0; i < counts.equivalence; ++i) {
    const std::size_t n = 3 + static_cast<std::size_t>(i % 3);
    const std::uint64_t s = derive_seed(seed, 0x4D000 + static_cast<std::uint64_t>(i));
    const TspInstance base = gen_tsp(n, s);
    Rng rng(derive_seed(s, 1));
    std::vector<double> scores(n);
    for (double& x : scores) x = rng.uniform(-1.0, 1.0);
    const DistanceMatrix w = distance_matrix(base);
    const double expanded = brute_force_atsp(node_weighted_reduction(scores, w));
    const double direct = brute_node_weighted_tsp(scores, w);
    record(nw, same_value(expanded, direct),
           fmt::format("fixture {} (N={}): expanded {:.12f} vs direct {:.12f}", i, n, expanded, direct));
  }
  out.push_back(nw);

  VerifyLine tw;
  tw.name = "time-expanded-tsptw";
  for (int i = 0; i < counts.equivalence; ++i) {
    GeneratorConfig cfg;
    const std::size_t n = 4 + static_cast<std::size_t>(i % 2);
    cfg.tw_horizon = static_cast<int>(n) + (i % 4) * 2;
    cfg.tw_slack = 1 + i % 3;
    TspTwInstance inst = gen_tsptw(n, derive_seed(seed, 0x3E000 + static_cast<std::uint64_t>(i)), cfg);
    inst.base.id = fmt::format("tsptw-{}-{:03d}", n, i);
    const double expanded = brute_tsptw_expanded(inst, tsptw_expand(inst));
    const double perms = brute_tsptw_permutations(inst);
    record(tw, same_value(expanded, perms),
           fmt::format("{}: expanded {:.12f} vs permutations {:.12f}\n{}", inst.base.id, expanded, perms,
                       format_instance(Instance{inst})));
  }
  out.push_back(tw);

  for (auto& line : out) line.passed = line.cases > 0 && line.failures == 0;
  return out;
}

}  // namespace difuada
