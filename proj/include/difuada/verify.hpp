#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace difuada {

struct VerifyLine {
  std::string name;
  bool passed = false;
  int cases = 0;
  int failures = 0;
  std::string detail;  // first failure, with the serialized counterexample when there is one
};

struct VerifyCounts {
  int theorem = 50;      // PCTSP-7 and uniform-score OP-7 instances each
  int equivalence = 25;  // node-weighted reduction and time-expanded fixtures each
};

/// Theorem checks on generated PCTSP/OP instances plus the node-splitting and
/// time-expansion equivalences, each against an independent enumeration.
std::vector<VerifyLine> run_verify(std::uint64_t seed, const VerifyCounts& counts = {});

}  // namespace difuada
