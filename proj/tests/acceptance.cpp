// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Tolerances and sizes follow the build contract; see README for the list.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "checks.hpp"
#include "difuada/adapt.hpp"
#include "difuada/bench.hpp"
#include "difuada/verify.hpp"

namespace fs = std::filesystem;
using namespace difuada;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<Verdict> g_verdicts;

void report(int id, std::string name, bool passed, std::string detail) {
  fmt::print("[{}] criterion {:2d} {}: {}\n", passed ? "PASS" : "FAIL", id, name, detail);
  std::cout.flush();
  g_verdicts.push_back({id, std::move(name), passed, std::move(detail)});
}

void progress(const std::string& msg) { std::cerr << "... " << msg << std::endl; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const BenchRow& row_of(const std::vector<BenchRow>& rows, std::string_view method) {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw Error(fmt::format("no row for method {}", method));
}

const AblationRow& ablation_row(const std::vector<AblationRow>& rows, std::string_view x) {
  for (const auto& r : rows)
    if (r.x == x) return r;
  throw Error(fmt::format("no ablation row x={}", x));
}

// Everything criteria 5 to 7 produce; run twice for criterion 10.
struct Block {
  TrainResult trained;
  double train_seconds = 0.0;
  std::vector<BenchRow> tsp;
  double tsp_seconds = 0.0;
  std::map<ProblemKind, std::vector<BenchRow>> bench;
  double transfer_seconds = 0.0;
  std::map<ProblemKind, std::map<AblationKind, std::vector<AblationRow>>> ablations;
  std::map<ProblemKind, bool> tau_zero_identical;
  std::map<ProblemKind, std::string> recheck;  // empty when every best solution re-verifies
  std::vector<fs::path> csvs;
};

BenchConfig transfer_config(ProblemKind kind, std::uint64_t seed, int threads) {
  BenchConfig cfg;
  cfg.kind = kind;
  cfg.sizes = {10};
  cfg.n_instances = 50;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.adapt.K = 20;
  cfg.adapt.guidance.tau = 0.1;
  cfg.adapt.guidance.energy.mu = 1.0;
  return cfg;
}

// Hard constraints recomputed here from coordinates, without check_feasible.
std::string recheck_best(const DenoiserParams& params, const NoiseSchedule& schedule, const BenchConfig& cfg) {
  const Suite suite = build_suite(cfg, cfg.sizes.front());
  for (std::size_t i = 0; i < suite.instances.size(); ++i) {
    const Instance& inst = suite.instances[i];
    const AdaptResult r = run_adaptation(params, inst, schedule, cfg.adapt, instance_seed(cfg.seed, cfg.sizes.front(), i));
    const auto& tour = r.best.solution.tour;
    if (const auto* p = std::get_if<PctspInstance>(&inst)) {
      double prize = 0.0;
      for (std::size_t v : tour) prize += p->prizes[v];
      if (prize < p->prize_threshold) return fmt::format("{}: prize {} < {}", p->base.id, prize, p->prize_threshold);
    } else if (const auto* o = std::get_if<OpInstance>(&inst)) {
      double len = 0.0;
      for (std::size_t k = 0; k < tour.size() && tour.size() > 1; ++k) {
        const Point a = o->base.points[tour[k]], b = o->base.points[tour[(k + 1) % tour.size()]];
        len += std::hypot(a.x - b.x, a.y - b.y);
      }
      if (len > o->budget) return fmt::format("{}: length {} > {}", o->base.id, len, o->budget);
    }
  }
  return {};
}

Block run_block(const fs::path& dir, std::uint64_t seed, int threads) {
  fs::create_directories(dir);
  Block b;
  const NoiseSchedule schedule = make_schedule();

  progress(fmt::format("{}: labelling 2000 TSP-10 instances and training 30 epochs", dir.filename().string()));
  auto t0 = Clock::now();
  const auto data = make_tsp_dataset(10, 2000, seed);
  TrainOptions opts;
  opts.seed = derive_seed(seed, 0x7A1);
  opts.threads = threads;
  opts.on_epoch = [](int epoch, double loss) {
    if (epoch % 5 == 0) progress(fmt::format("epoch {} loss {:.5f}", epoch, loss));
  };
  b.trained = train(ModelConfig{}, data, schedule, opts);
  b.train_seconds = since(t0);
  {
    const fs::path loss = dir / "train_loss.csv";
    std::ofstream out(loss);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < b.trained.epoch_loss.size(); ++e) out << fmt::format("{},{:.9f}\n", e + 1, b.trained.epoch_loss[e]);
    b.csvs.push_back(loss);
  }
  const DenoiserParams& params = b.trained.params;

  progress("TSP-10 held-out benchmark, 200 instances");
  t0 = Clock::now();
  BenchConfig tsp;
  tsp.kind = ProblemKind::tsp;
  tsp.sizes = {10};
  tsp.n_instances = 200;
  tsp.seed = seed;
  tsp.threads = threads;
  tsp.methods = {BenchMethod::unguided};
  b.tsp = run_benchmark(params, schedule, tsp);
  b.tsp_seconds = since(t0);
  write_bench_csv(b.tsp, dir / "bench_tsp.csv");
  emit_report(b.tsp, describe(tsp), dir / "bench_tsp.md");
  b.csvs.push_back(dir / "bench_tsp.csv");

  t0 = Clock::now();
  for (ProblemKind kind : {ProblemKind::pctsp, ProblemKind::op}) {
    const std::string name(to_string(kind));
    progress(fmt::format("{}-10 transfer benchmark", name));
    const BenchConfig cfg = transfer_config(kind, seed, threads);
    b.bench[kind] = run_benchmark(params, schedule, cfg);
    const fs::path csv = dir / fmt::format("bench_{}.csv", name);
    write_bench_csv(b.bench[kind], csv);
    emit_report(b.bench[kind], describe(cfg), dir / fmt::format("bench_{}.md", name));
    b.csvs.push_back(csv);
  }
  b.transfer_seconds = since(t0);

  for (ProblemKind kind : {ProblemKind::pctsp, ProblemKind::op}) {
    const std::string name(to_string(kind));
    const BenchConfig cfg = transfer_config(kind, seed, threads);
    for (AblationKind ak : {AblationKind::k_sweep, AblationKind::guidance_onoff, AblationKind::tau_sweep, AblationKind::mu_sweep}) {
      progress(fmt::format("{} ablation {}", name, to_string(ak)));
      b.ablations[kind][ak] = run_ablation(ak, params, schedule, cfg);
      const fs::path csv = dir / fmt::format("ablate_{}_{}.csv", to_string(ak), name);
      write_ablation_csv(b.ablations[kind][ak], csv);
      emit_ablation_report(b.ablations[kind][ak], describe(cfg), dir / fmt::format("ablate_{}_{}.md", to_string(ak), name));
      b.csvs.push_back(csv);
    }

    // tau = 0 against guidance switched off, instance by instance
    const Suite suite = build_suite(cfg, 10);
    AdaptConfig zero = cfg.adapt, off = cfg.adapt;
    zero.guidance.tau = 0.0;
    off.guidance.enabled = false;
    const auto a = solve_suite(params, schedule, suite, zero, seed, threads);
    const auto c = solve_suite(params, schedule, suite, off, seed, threads);
    bool same = a.size() == c.size();
    for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i].objective == c[i].objective && a[i].feasible == c[i].feasible;
    b.tau_zero_identical[kind] = same;

    progress(fmt::format("{} independent feasibility recheck", name));
    b.recheck[kind] = recheck_best(params, schedule, cfg);
  }
  return b;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string work = "acceptance_work";
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--work-dir", work, "scratch directory for CSVs and reports")->capture_default_str();
  app.add_option("--seed", seed, "global seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads (0: DIFUADA_THREADS or 1)");
  CLI11_PARSE(app, argc, argv);
  threads = resolve_threads(threads);
  const fs::path root(work);
  fs::create_directories(root);
  fmt::print("acceptance suite, seed {}, {} thread(s), build {}\n", seed, threads, build_id());

  try {
    // 1. theorem suite
    {
      auto t0 = Clock::now();
      const auto lines = run_verify(seed, VerifyCounts{50, 0});
      const double secs = since(t0);
      bool ok = secs < 300.0;
      std::string detail;
      for (const auto& l : lines) {
        if (l.name != "theorem-pctsp" && l.name != "theorem-op") continue;
        ok = ok && l.passed;
        detail += fmt::format("{} {}/{} ok; ", l.name, l.cases - l.failures, l.cases);
        if (!l.passed) std::cerr << l.name << " first failure: " << l.detail.substr(0, l.detail.find('\n')) << "\n";
      }
      report(1, "theorem suite", ok, detail + fmt::format("{:.1f}s", secs));
    }

    // 2. gradient suite
    {
      auto t0 = Clock::now();
      bool ok = true;
      std::string detail;
      for (ProblemKind kind : {ProblemKind::tsp, ProblemKind::pctsp, ProblemKind::op, ProblemKind::tsptw}) {
        const auto r = checks::energy_gradient(kind, 100, seed + 17, 1e-5);
        ok = ok && r.passed && r.cases == 100;
        detail += fmt::format("{} worst {:.1e}; ", to_string(kind), r.worst);
      }
      const auto d = checks::denoiser_gradient(seed + 1, 1e-3);
      ok = ok && d.passed;
      const double secs = since(t0);
      ok = ok && secs < 180.0;
      report(2, "gradient suite", ok, detail + fmt::format("denoiser worst {:.1e} over {} params; {:.1f}s", d.worst, d.cases, secs));
    }

    // 3. diffusion statistics
    {
      const auto flips = checks::flip_rates({1, 5, 10, 25, 50}, 10000, seed + 21);
      const auto post = checks::posterior_enumeration(1000, seed + 3);
      report(3, "diffusion statistics", flips.passed && post.passed,
             fmt::format("flip rates worst {:.2f} sigma at 5 timesteps; posterior worst abs error {:.1e} over {} fixtures",
                         flips.worst, post.worst, post.cases));
    }

    // 4. oracle equivalence
    {
      const auto hk = checks::held_karp_vs_permutations(200, seed + 5);
      const auto pc = checks::subset_oracles_vs_enumeration(ProblemKind::pctsp, 100, seed + 6);
      const auto op = checks::subset_oracles_vs_enumeration(ProblemKind::op, 100, seed + 7);
      report(4, "oracle equivalence", hk.passed && pc.passed && op.passed,
             fmt::format("held-karp {}/{}, pctsp {}/{}, op {}/{} exact", hk.cases - hk.failures, hk.cases,
                         pc.cases - pc.failures, pc.cases, op.cases - op.failures, op.cases) +
                 (hk.passed && pc.passed && op.passed ? "" : "; " + hk.detail + pc.detail + op.detail));
    }

    // 5 to 7 on the first block, repeated for 10
    const Block a = run_block(root / "run_a", seed, threads);

    {
      const double first = a.trained.epoch_loss.front(), last = a.trained.epoch_loss.back();
      const BenchRow& r = a.tsp.front();
      const double secs = a.train_seconds + a.tsp_seconds;
      const bool ok = last < 0.5 * first && r.mean_gap <= 5.0 && secs < 1800.0;
      report(5, "training gate", ok,
             fmt::format("loss {:.4f} -> {:.4f} (ratio {:.3f}); unguided TSP-10 gap {:.2f}% over {} instances; {:.0f}s",
                         first, last, last / first, r.mean_gap, r.count, secs));
    }

    {
      bool ok = a.transfer_seconds < 1200.0;
      std::string detail;
      for (ProblemKind kind : {ProblemKind::pctsp, ProblemKind::op}) {
        const auto& rows = a.bench.at(kind);
        const double u = row_of(rows, "unguided").mean_gap, f = row_of(rows, "full-adapt").mean_gap;
        const double reduction = u > 0.0 ? (u - f) / u : 0.0;
        ok = ok && reduction >= 0.30;
        detail += fmt::format("{} unguided {:.2f}% -> full-adapt {:.2f}% ({:.0f}% lower); ", to_string(kind), u, f,
                              100.0 * reduction);
      }
      report(6, "directional transfer", ok, detail + fmt::format("{:.0f}s", a.transfer_seconds));
    }

    {
      bool ok = true;
      std::string detail;
      for (ProblemKind kind : {ProblemKind::pctsp, ProblemKind::op}) {
        const auto& ks = a.ablations.at(kind).at(AblationKind::k_sweep);
        const double k1 = ablation_row(ks, "1").stats.mean_gap, k20 = ablation_row(ks, "20").stats.mean_gap;
        const auto& onoff = a.ablations.at(kind).at(AblationKind::guidance_onoff);
        const double on = ablation_row(onoff, "on").stats.mean_gap, off = ablation_row(onoff, "off").stats.mean_gap;
        const auto& taus = a.ablations.at(kind).at(AblationKind::tau_sweep);
        const BenchRow& t0 = ablation_row(taus, "0").stats;
        const BenchRow& offrow = ablation_row(onoff, "off").stats;
        const bool tau_rows = t0.mean_gap == offrow.mean_gap && t0.mean_objective == offrow.mean_objective;
        const bool ka = k20 <= k1 * 1.05, kb = on <= off * 1.05;
        const bool kc = tau_rows && a.tau_zero_identical.at(kind);
        ok = ok && ka && kb && kc;
        detail += fmt::format("{} (a) K=1 {:.2f}% K=20 {:.2f}% {}; (b) on {:.2f}% off {:.2f}% {}; (c) tau=0 {}; ",
                              to_string(kind), k1, k20, ka ? "ok" : "no", on, off, kb ? "ok" : "no",
                              kc ? "identical" : "differs");
      }
      detail.resize(detail.size() - 2);
      report(7, "ablation directions", ok, detail);
    }

    {
      long decodes = 0, feasible = 0;
      bool rates = true;
      auto count = [&](const BenchRow& r) {
        decodes += r.decodes;
        feasible += r.feasible_decodes;
        rates = rates && r.feasible_rate == 1.0;
      };
      std::string recheck;
      for (ProblemKind kind : {ProblemKind::pctsp, ProblemKind::op}) {
        for (const auto& r : a.bench.at(kind)) count(r);
        for (const auto& [ak, rows] : a.ablations.at(kind))
          for (const auto& r : rows) count(r.stats);
        if (!a.recheck.at(kind).empty()) recheck += a.recheck.at(kind) + "; ";
      }
      const bool ok = rates && decodes == feasible && recheck.empty();
      report(8, "feasibility guarantee", ok,
             fmt::format("{}/{} decodes feasible across bench and ablation rows; best solutions rechecked from coordinates{}",
                         feasible, decodes, recheck.empty() ? "" : ": " + recheck));
    }

    // 9. reduction equivalences
    {
      const auto lines = run_verify(seed, VerifyCounts{0, 25});
      bool ok = true;
      std::string detail;
      for (const auto& l : lines) {
        if (l.name != "node-weighted-reduction" && l.name != "time-expanded-tsptw") continue;
        ok = ok && l.passed && l.cases == 25;
        detail += fmt::format("{} {}/{}; ", l.name, l.cases - l.failures, l.cases);
      }
      detail.resize(detail.size() - 2);
      report(9, "reduction equivalences", ok, detail);
    }

    // 10. determinism
    {
      const Block b = run_block(root / "run_b", seed, threads);
      bool ok = a.csvs.size() == b.csvs.size();
      std::string diff;
      for (std::size_t i = 0; ok && i < a.csvs.size(); ++i) {
        if (slurp(a.csvs[i]) != slurp(b.csvs[i])) {
          ok = false;
          diff = a.csvs[i].filename().string();
        }
      }
      report(10, "determinism", ok,
             ok ? fmt::format("{} CSVs byte-identical across two runs", a.csvs.size()) : "differs: " + diff);
    }
  } catch (const std::exception& e) {
    fmt::print("[FAIL] aborted: {}\n", e.what());
    return 1;
  }

  int failed = 0;
  for (const auto& v : g_verdicts) failed += !v.passed;
  fmt::print("{} of {} criteria passed\n", g_verdicts.size() - static_cast<std::size_t>(failed), g_verdicts.size());
  {
    std::ofstream out(root / "acceptance_summary.txt");
    for (const auto& v : g_verdicts) out << fmt::format("[{}] {} {}: {}\n", v.passed ? "PASS" : "FAIL", v.id, v.name, v.detail);
  }
  return failed == 0 && g_verdicts.size() == 10 ? 0 : 1;
}
