#include "difuada/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "difuada/errors.hpp"

#ifndef DIFUADA_BUILD_ID
#define DIFUADA_BUILD_ID "unknown"
#endif

namespace difuada {

std::string_view to_string(BenchMethod method) {
  switch (method) {
    case BenchMethod::unguided: return "unguided";
    case BenchMethod::guidance_only: return "guidance-only";
    case BenchMethod::full_adapt: return "full-adapt";
  }
  return "unknown";
}

BenchMethod parse_bench_method(std::string_view name) {
  if (name == "unguided") return BenchMethod::unguided;
  if (name == "guidance-only") return BenchMethod::guidance_only;
  if (name == "full-adapt") return BenchMethod::full_adapt;
  throw ConfigError(fmt::format("unknown method '{}'", name));
}

std::string_view to_string(OracleKind kind) { return kind == OracleKind::exact ? "exact" : "ils"; }

OracleKind parse_oracle_kind(std::string_view name) {
  if (name == "exact") return OracleKind::exact;
  if (name == "ils") return OracleKind::ils;
  throw ConfigError(fmt::format("unknown oracle '{}', expected exact or ils", name));
}

std::string_view to_string(AblationKind kind) {
  switch (kind) {
    case AblationKind::k_sweep: return "K-sweep";
    case AblationKind::tau_sweep: return "tau-sweep";
    case AblationKind::mu_sweep: return "mu-sweep";
    case AblationKind::guidance_onoff: return "guidance-onoff";
  }
  return "unknown";
}

AblationKind parse_ablation_kind(std::string_view name) {
  if (name == "K-sweep" || name == "k-sweep") return AblationKind::k_sweep;
  if (name == "tau-sweep") return AblationKind::tau_sweep;
  if (name == "mu-sweep") return AblationKind::mu_sweep;
  if (name == "guidance-onoff") return AblationKind::guidance_onoff;
  throw ConfigError(fmt::format("unknown ablation '{}'", name));
}

void BenchConfig::validate() const {
  if (sizes.empty()) throw ConfigError("bench needs at least one size");
  if (methods.empty()) throw ConfigError("bench needs at least one method");
  if (n_instances < 1) throw ConfigError("bench needs at least one instance per size");
  for (std::size_t n : sizes) {
    if (oracle == OracleKind::exact) {
      const std::size_t limit = kind == ProblemKind::tsp     ? kHeldKarpMaxNodes
                                : kind == ProblemKind::tsptw ? 10
                                                             : kSubsetEnumMaxNodes;
      if (n > limit) {
        throw ConfigError(fmt::format("exact oracle for {} supports N <= {}, got {}", to_string(kind), limit, n));
      }
    } else if (kind != ProblemKind::pctsp) {
      throw ConfigError("the ils oracle is only available for pctsp");
    }
  }
}

AdaptConfig method_config(BenchMethod method, const AdaptConfig& base) {
  AdaptConfig cfg = base;
  switch (method) {
    case BenchMethod::unguided:
      cfg.guidance.enabled = false;
      cfg.K = 0;
      break;
    case BenchMethod::guidance_only:
      cfg.K = 0;
      break;
    case BenchMethod::full_adapt:
      break;
  }
  return cfg;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DIFUADA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min<long>(v, 256));
  }
  return 1;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t instance_seed(std::uint64_t global_seed, std::size_t size, std::size_t index) {
  return derive_seed(derive_seed(global_seed, 0xADA00000ULL + size), index);
}

Suite build_suite(const BenchConfig& cfg, std::size_t size) {
  Suite suite;
  suite.size = size;
  const auto count = static_cast<std::size_t>(cfg.n_instances);
  suite.instances.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, 0x1E570000ULL + size), i);
    Instance inst = generate(cfg.kind, size, seed, cfg.generator);
    base_of(inst).id = fmt::format("{}-{}-{:04d}", to_string(cfg.kind), size, i);
    suite.instances.push_back(std::move(inst));
  }
  suite.oracle.resize(count);
  const int threads = resolve_threads(cfg.threads);
  parallel_for(count, threads, [&](std::size_t i) {
    const Instance& inst = suite.instances[i];
    if (cfg.oracle == OracleKind::ils) {
      suite.oracle[i] = ils_pctsp(std::get<PctspInstance>(inst), cfg.ils_iterations, instance_seed(cfg.seed, size, i));
    } else {
      suite.oracle[i] = solve_oracle(inst, cfg.ils_iterations, instance_seed(cfg.seed, size, i));
    }
  });
  return suite;
}

double optimality_gap(ProblemKind kind, double objective, double oracle_value) {
  if (kind == ProblemKind::op) {
    if (objective <= 0.0) return oracle_value <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return (oracle_value / objective - 1.0) * 100.0;
  }
  if (oracle_value <= 0.0) return objective <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (objective / oracle_value - 1.0) * 100.0;
}

namespace {

// OP reports collected score; every other kind reports cost.
double reported_objective(ProblemKind kind, double phi_value) { return kind == ProblemKind::op ? -phi_value : phi_value; }

}  // namespace

std::vector<InstanceOutcome> solve_suite(const DenoiserParams& params, const NoiseSchedule& schedule,
                                         const Suite& suite, const AdaptConfig& adapt, std::uint64_t seed,
                                         int threads) {
  std::vector<InstanceOutcome> out(suite.instances.size());
  parallel_for(suite.instances.size(), threads, [&](std::size_t i) {
    const Instance& inst = suite.instances[i];
    const ProblemKind kind = kind_of(inst);
    InstanceOutcome& o = out[i];
    o.id = base_of(inst).id;
    const auto start = std::chrono::steady_clock::now();
    const AdaptTrace* trace = nullptr;
    AdaptResult result;
    try {
      result = run_adaptation(params, inst, schedule, adapt, instance_seed(seed, suite.size, i));
      o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      o.feasible = true;
      o.objective = reported_objective(kind, result.best.objective);
      o.gap = optimality_gap(kind, o.objective, suite.oracle[i].optimal_value);
      trace = &result.trace;
      for (const auto& r : trace->records) {
        ++o.decodes;
        if (r.feasible) ++o.feasible_decodes;
      }
    } catch (const AdaptInfeasibleError& e) {
      o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      o.feasible = false;
      o.objective = std::numeric_limits<double>::quiet_NaN();
      o.gap = std::numeric_limits<double>::quiet_NaN();
      o.decodes = static_cast<int>(e.trace().records.size());
    }
  });
  return out;
}

BenchRow aggregate(std::string method, std::size_t size, const std::vector<InstanceOutcome>& outcomes) {
  BenchRow row;
  row.method = std::move(method);
  row.size = size;
  row.count = outcomes.size();
  std::vector<double> gaps;
  double obj = 0.0, secs = 0.0;
  for (const auto& o : outcomes) {
    secs += o.seconds;
    row.decodes += o.decodes;
    row.feasible_decodes += o.feasible_decodes;
    if (!o.feasible) continue;
    gaps.push_back(o.gap);
    obj += o.objective;
  }
  const auto k = static_cast<double>(gaps.size());
  row.feasible_rate = outcomes.empty() ? 0.0 : k / static_cast<double>(outcomes.size());
  row.mean_seconds = outcomes.empty() ? 0.0 : secs / static_cast<double>(outcomes.size());
  if (!gaps.empty()) {
    row.mean_objective = obj / k;
    double sum = 0.0;
    for (double g : gaps) sum += g;
    row.mean_gap = sum / k;
    if (gaps.size() > 1) {
      double ss = 0.0;
      for (double g : gaps) ss += (g - row.mean_gap) * (g - row.mean_gap);
      row.stderr_gap = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    }
  } else {
    row.mean_objective = row.mean_gap = row.stderr_gap = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

std::vector<BenchRow> run_benchmark(const DenoiserParams& params, const NoiseSchedule& schedule,
                                    const BenchConfig& cfg) {
  cfg.validate();
  cfg.adapt.validate(schedule);
  const int threads = resolve_threads(cfg.threads);
  std::vector<BenchRow> rows;
  for (std::size_t size : cfg.sizes) {
    const Suite suite = build_suite(cfg, size);
    for (BenchMethod m : cfg.methods) {
      const auto outcomes = solve_suite(params, schedule, suite, method_config(m, cfg.adapt), cfg.seed, threads);
      rows.push_back(aggregate(std::string(to_string(m)), size, outcomes));
    }
  }
  return rows;
}

std::vector<AblationRow> run_ablation(AblationKind kind, const DenoiserParams& params, const NoiseSchedule& schedule,
                                      const BenchConfig& cfg) {
  cfg.validate();
  cfg.adapt.validate(schedule);
  const int threads = resolve_threads(cfg.threads);
  const std::string sweep(to_string(kind));
  std::vector<AblationRow> rows;
  for (std::size_t size : cfg.sizes) {
    const Suite suite = build_suite(cfg, size);
    auto add = [&](std::string x, double xv, const std::vector<InstanceOutcome>& outcomes) {
      rows.push_back(AblationRow{sweep, size, std::move(x), xv, aggregate(sweep, size, outcomes)});
    };
    switch (kind) {
      case AblationKind::k_sweep: {
        // One run at the largest K; smaller K are prefixes of the same trace.
        AdaptConfig a = cfg.adapt;
        a.K = kKSweep.back();
        a.track_best = true;
        std::vector<AdaptTrace> traces(suite.instances.size());
        std::vector<char> ok(suite.instances.size(), 0);
        parallel_for(suite.instances.size(), threads, [&](std::size_t i) {
          try {
            traces[i] = run_adaptation(params, suite.instances[i], schedule, a, instance_seed(cfg.seed, size, i)).trace;
            ok[i] = 1;
          } catch (const AdaptInfeasibleError& e) {
            traces[i] = e.trace();
          }
        });
        for (int K : kKSweep) {
          std::vector<InstanceOutcome> outcomes(suite.instances.size());
          for (std::size_t i = 0; i < suite.instances.size(); ++i) {
            InstanceOutcome& o = outcomes[i];
            o.id = base_of(suite.instances[i]).id;
            const auto& recs = traces[i].records;
            const auto upto = std::min<std::size_t>(static_cast<std::size_t>(K) + 1, recs.size());
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < upto; ++r) {
              ++o.decodes;
              if (!recs[r].feasible) continue;
              ++o.feasible_decodes;
              best = std::min(best, recs[r].objective);
            }
            o.seconds = upto ? recs[upto - 1].wall_seconds : 0.0;
            o.feasible = std::isfinite(best);
            const ProblemKind pk = kind_of(suite.instances[i]);
            o.objective = o.feasible ? reported_objective(pk, best) : std::numeric_limits<double>::quiet_NaN();
            o.gap = o.feasible ? optimality_gap(pk, o.objective, suite.oracle[i].optimal_value)
                               : std::numeric_limits<double>::quiet_NaN();
          }
          add(fmt::format("{}", K), K, outcomes);
        }
        break;
      }
      case AblationKind::tau_sweep:
        for (double tau : kTauSweep) {
          AdaptConfig a = cfg.adapt;
          a.guidance.tau = tau;
          add(fmt::format("{}", tau), tau, solve_suite(params, schedule, suite, a, cfg.seed, threads));
        }
        break;
      case AblationKind::mu_sweep:
        for (double mu : kMuSweep) {
          AdaptConfig a = cfg.adapt;
          a.guidance.energy.mu = mu;
          add(fmt::format("{}", mu), mu, solve_suite(params, schedule, suite, a, cfg.seed, threads));
        }
        break;
      case AblationKind::guidance_onoff:
        for (bool on : {true, false}) {
          AdaptConfig a = cfg.adapt;
          a.guidance.enabled = on;
          add(on ? "on" : "off", on ? 1.0 : 0.0, solve_suite(params, schedule, suite, a, cfg.seed, threads));
        }
        break;
    }
  }
  return rows;
}

std::string build_id() { return DIFUADA_BUILD_ID; }

namespace {

std::string num(double v) { return fmt::format("{:.6f}", v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

constexpr std::string_view kBenchHeader =
    "method,size,count,mean_objective,mean_gap_pct,stderr_gap_pct,feasible_rate,decodes,feasible_decodes";

}  // namespace

std::filesystem::path timing_path(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p.replace_filename(csv.stem().string() + "_timing.csv");
  return p;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw ConfigError("no rows to write");
  std::string csv = std::string(kBenchHeader) + "\n";
  std::string timing = "method,size,mean_seconds\n";
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.method, r.size, r.count, num(r.mean_objective),
                       num(r.mean_gap), num(r.stderr_gap), num(r.feasible_rate), r.decodes, r.feasible_decodes);
    timing += fmt::format("{},{},{}\n", r.method, r.size, num(r.mean_seconds));
  }
  write_text(path, csv);
  write_text(timing_path(path), timing);
}

std::vector<BenchRow> read_bench_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kBenchHeader) {
    throw ParseError(fmt::format("{}: unexpected header", path.string()));
  }
  std::vector<BenchRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw ParseError(fmt::format("{}:{}: expected 9 fields", path.string(), lineno));
    try {
      BenchRow r;
      r.method = f[0];
      r.size = std::stoul(f[1]);
      r.count = std::stoul(f[2]);
      r.mean_objective = std::stod(f[3]);
      r.mean_gap = std::stod(f[4]);
      r.stderr_gap = std::stod(f[5]);
      r.feasible_rate = std::stod(f[6]);
      r.decodes = std::stoi(f[7]);
      r.feasible_decodes = std::stoi(f[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("{}:{}: malformed number", path.string(), lineno));
    }
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw ConfigError("no rows to write");
  std::string csv = "sweep,size,x,neg_x,count,mean_gap_pct,stderr_gap_pct,feasible_rate,decodes,feasible_decodes\n";
  std::string timing = "sweep,size,x,mean_seconds\n";
  for (const auto& r : rows) {
    const bool numeric = r.sweep != "guidance-onoff";
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.sweep, r.size, r.x,
                       numeric ? fmt::format("{}", -r.x_value) : std::string(), r.stats.count,
                       num(r.stats.mean_gap), num(r.stats.stderr_gap), num(r.stats.feasible_rate), r.stats.decodes,
                       r.stats.feasible_decodes);
    timing += fmt::format("{},{},{},{}\n", r.sweep, r.size, r.x, num(r.stats.mean_seconds));
  }
  write_text(path, csv);
  write_text(timing_path(path), timing);
}

ConfigEcho describe(const BenchConfig& cfg) {
  std::string sizes, methods;
  for (std::size_t s : cfg.sizes) sizes += fmt::format("{}{}", sizes.empty() ? "" : " ", s);
  for (BenchMethod m : cfg.methods) methods += fmt::format("{}{}", methods.empty() ? "" : " ", to_string(m));
  return {
      {"problem", std::string(to_string(cfg.kind))},
      {"sizes", sizes},
      {"instances", fmt::format("{}", cfg.n_instances)},
      {"methods", methods},
      {"seed", fmt::format("{}", cfg.seed)},
      {"oracle", std::string(to_string(cfg.oracle))},
      {"K", fmt::format("{}", cfg.adapt.K)},
      {"renoise_level", fmt::format("{}", cfg.adapt.renoise_level)},
      {"mode", std::string(to_string(cfg.adapt.mode))},
      {"infer_steps", fmt::format("{}", cfg.adapt.infer_steps)},
      {"track_best", cfg.adapt.track_best ? "true" : "false"},
      {"tau", fmt::format("{}", cfg.adapt.guidance.tau)},
      {"mu", fmt::format("{}", cfg.adapt.guidance.energy.mu)},
      {"grad_clip", fmt::format("{}", cfg.adapt.guidance.grad_clip)},
      {"guidance", cfg.adapt.guidance.enabled ? "on" : "off"},
      {"two_opt", cfg.adapt.decode.two_opt ? "on" : "off"},
  };
}

namespace {

std::string echo_block(const ConfigEcho& echo) {
  std::string s = fmt::format("Build: `{}`\n\n| setting | value |\n|---|---|\n", build_id());
  for (const auto& [k, v] : echo) s += fmt::format("| {} | {} |\n", k, v);
  return s;
}

}  // namespace

void emit_report(const std::vector<BenchRow>& rows, const ConfigEcho& echo, const std::filesystem::path& path) {
  if (rows.empty()) throw ConfigError("no rows to report");
  std::string md = "# Benchmark\n\n" + echo_block(echo);
  md += "\n| method | N | count | mean objective | mean gap % | stderr | feasible | mean time s |\n";
  md += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    md += fmt::format("| {} | {} | {} | {:.4f} | {:.2f} | {:.2f} | {:.3f} | {:.4f} |\n", r.method, r.size, r.count,
                      r.mean_objective, r.mean_gap, r.stderr_gap, r.feasible_rate, r.mean_seconds);
  }
  write_text(path, md);
}

void emit_ablation_report(const std::vector<AblationRow>& rows, const ConfigEcho& echo,
                          const std::filesystem::path& path) {
  if (rows.empty()) throw ConfigError("no rows to report");
  std::string md = fmt::format("# Ablation: {}\n\n", rows.front().sweep) + echo_block(echo);
  md += "\n| N | x | -x | mean gap % | stderr | feasible | mean time s |\n|---|---|---|---|---|---|---|\n";
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : rows) {
    md += fmt::format("| {} | {} | {} | {:.2f} | {:.2f} | {:.3f} | {:.4f} |\n", r.size, r.x, -r.x_value,
                      r.stats.mean_gap, r.stats.stderr_gap, r.stats.feasible_rate, r.stats.mean_seconds);
    lo = std::min(lo, r.stats.mean_gap);
    hi = std::max(hi, r.stats.mean_gap);
  }
  md += fmt::format("\nSpread of mean gap across rows: {:.2f} percentage points.\n", hi - lo);
  write_text(path, md);
}

}  // namespace difuada
