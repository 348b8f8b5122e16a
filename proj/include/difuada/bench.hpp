#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "difuada/adapt.hpp"
#include "difuada/denoiser.hpp"
#include "difuada/diffusion.hpp"
#include "difuada/instances.hpp"
#include "difuada/oracles.hpp"

namespace difuada {

enum class BenchMethod { unguided, guidance_only, full_adapt };
enum class OracleKind { exact, ils };
enum class AblationKind { k_sweep, tau_sweep, mu_sweep, guidance_onoff };

std::string_view to_string(BenchMethod method);
BenchMethod parse_bench_method(std::string_view name);
std::string_view to_string(OracleKind kind);
OracleKind parse_oracle_kind(std::string_view name);
std::string_view to_string(AblationKind kind);
AblationKind parse_ablation_kind(std::string_view name);

struct BenchConfig {
  ProblemKind kind = ProblemKind::pctsp;
  std::vector<std::size_t> sizes{10, 12};
  int n_instances = 50;
  std::vector<BenchMethod> methods{BenchMethod::unguided, BenchMethod::guidance_only, BenchMethod::full_adapt};
  std::uint64_t seed = 0;
  OracleKind oracle = OracleKind::exact;
  int ils_iterations = 1000;
  GeneratorConfig generator;
  AdaptConfig adapt;  // full-adapt settings; the other methods derive from it
  int threads = 0;    // 0: DIFUADA_THREADS, else 1

  void validate() const;
};

/// Adaptation settings a method actually runs with.
AdaptConfig method_config(BenchMethod method, const AdaptConfig& base);

/// Threads to use: `requested` if positive, else DIFUADA_THREADS, else 1.
int resolve_threads(int requested);

/// Runs fn(0..count-1) on up to `threads` workers. fn must only write to its
/// own slot; results are then read back in index order.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// Generated instances of one size with their oracle values.
struct Suite {
  std::size_t size = 0;
  std::vector<Instance> instances;
  std::vector<OracleResult> oracle;
};

Suite build_suite(const BenchConfig& cfg, std::size_t size);

/// Seed of the adaptation rng for instance `index` of a suite; shared by every
/// method so paired runs see the same stream.
std::uint64_t instance_seed(std::uint64_t global_seed, std::size_t size, std::size_t index);

/// Percent gap: (cost / optimum - 1) * 100 when minimising, (optimum / score - 1) * 100 for OP.
double optimality_gap(ProblemKind kind, double objective, double oracle_value);

struct InstanceOutcome {
  std::string id;
  double objective = 0.0;  // cost, or collected score for OP
  double gap = 0.0;
  bool feasible = false;
  double seconds = 0.0;
  int decodes = 0;           // decodes made across all iterations
  int feasible_decodes = 0;
};

struct BenchRow {
  std::string method;
  std::size_t size = 0;
  std::size_t count = 0;
  double mean_objective = 0.0;
  double mean_gap = 0.0;
  double stderr_gap = 0.0;
  double mean_seconds = 0.0;
  double feasible_rate = 0.0;
  int decodes = 0;
  int feasible_decodes = 0;
};

/// Solves one suite with one adaptation setting.
std::vector<InstanceOutcome> solve_suite(const DenoiserParams& params, const NoiseSchedule& schedule,
                                         const Suite& suite, const AdaptConfig& adapt, std::uint64_t seed,
                                         int threads);

BenchRow aggregate(std::string method, std::size_t size, const std::vector<InstanceOutcome>& outcomes);

std::vector<BenchRow> run_benchmark(const DenoiserParams& params, const NoiseSchedule& schedule,
                                    const BenchConfig& cfg);

struct AblationRow {
  std::string sweep;
  std::size_t size = 0;
  std::string x;
  double x_value = 0.0;
  BenchRow stats;
};

std::vector<AblationRow> run_ablation(AblationKind kind, const DenoiserParams& params, const NoiseSchedule& schedule,
                                      const BenchConfig& cfg);

inline const std::vector<int> kKSweep{1, 5, 10, 20, 50};
inline const std::vector<double> kTauSweep{0.0, 0.01, 0.05, 0.1, 0.5, 1.0};
inline const std::vector<double> kMuSweep{0.1, 1.0, 10.0};

std::string build_id();

/// Fixed-column CSVs without timing; times go to a `<stem>_timing.csv` sidecar.
void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);
std::vector<BenchRow> read_bench_csv(const std::filesystem::path& path);
std::filesystem::path timing_path(const std::filesystem::path& csv);

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;
ConfigEcho describe(const BenchConfig& cfg);

/// Markdown table plus config echo and build id. Throws on empty rows.
void emit_report(const std::vector<BenchRow>& rows, const ConfigEcho& echo, const std::filesystem::path& path);
void emit_ablation_report(const std::vector<AblationRow>& rows, const ConfigEcho& echo,
                          const std::filesystem::path& path);

}  // namespace difuada
