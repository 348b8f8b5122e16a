// difuada command-line front end: gen, train, solve, oracle, bench, ablate, verify.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "difuada/adapt.hpp"
#include "difuada/bench.hpp"
#include "difuada/decode.hpp"
#include "difuada/denoiser.hpp"
#include "difuada/diffusion.hpp"
#include "difuada/errors.hpp"
#include "difuada/instances.hpp"
#include "difuada/oracles.hpp"
#include "difuada/verify.hpp"

namespace fs = std::filesystem;
using namespace difuada;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir = "out";
  std::string config;
};

struct ScheduleOpts {
  int steps = 50;
  double beta_min = 0.01;
  double beta_max = 0.2;
  NoiseSchedule make() const { return make_schedule(steps, beta_min, beta_max); }
};

struct AdaptOpts {
  AdaptConfig cfg;
  std::string mode = "jump";
  bool no_guidance = false;
  bool no_track_best = false;

  AdaptConfig resolve() const {
    AdaptConfig c = cfg;
    c.mode = parse_travel_mode(mode);
    c.guidance.enabled = !no_guidance;
    c.track_best = !no_track_best;
    return c;
  }
};

void add_schedule(CLI::App* app, ScheduleOpts& s) {
  app->add_option("--T", s.steps, "diffusion steps T")->capture_default_str();
  app->add_option("--beta-min", s.beta_min, "beta at t = 1")->capture_default_str();
  app->add_option("--beta-max", s.beta_max, "beta at t = T")->capture_default_str();
}

void add_generator(CLI::App* app, GeneratorConfig& g) {
  app->add_option("--penalty-scale", g.penalty_scale, "PCTSP penalties ~ U(0, scale/n)")->capture_default_str();
  app->add_option("--prize-threshold", g.prize_threshold, "PCTSP prize threshold R")->capture_default_str();
  app->add_option("--budget", g.op_budget, "OP length budget B")->capture_default_str();
  app->add_option("--horizon", g.tw_horizon, "TSP-TW horizon H (0: n)")->capture_default_str();
  app->add_option("--slack", g.tw_slack, "TSP-TW window half-width")->capture_default_str();
}

void add_adapt(CLI::App* app, AdaptOpts& a) {
  app->add_option("--K", a.cfg.K, "recursive travel iterations")->capture_default_str();
  app->add_option("--renoise-i", a.cfg.renoise_level, "renoise level i")->capture_default_str();
  app->add_option("--mode", a.mode, "inner loop: full or jump")->check(CLI::IsMember({"full", "jump"}))->capture_default_str();
  app->add_option("--infer-steps", a.cfg.infer_steps, "reverse steps of the initial pass")->capture_default_str();
  app->add_option("--tau", a.cfg.guidance.tau, "guidance temperature")->capture_default_str();
  app->add_option("--mu", a.cfg.guidance.energy.mu, "constraint penalty weight")->capture_default_str();
  app->add_option("--grad-clip", a.cfg.guidance.grad_clip, "per-edge gradient clip")->capture_default_str();
  app->add_flag("--no-guidance", a.no_guidance, "disable energy guidance");
  app->add_flag("--no-track-best", a.no_track_best, "return the last feasible iterate");
  app->add_flag("--two-opt", a.cfg.decode.two_opt, "apply 2-opt after decoding");
  app->add_option("--max-2opt-passes", a.cfg.decode.max_two_opt_passes, "2-opt pass limit")->capture_default_str();
}

// `key value` lines after a `DIFUADA-CONF v1` header become `--key=value`.
std::vector<std::string> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line.rfind("DIFUADA-CONF", 0) != 0) {
    throw ParseError(fmt::format("{}:1: expected 'DIFUADA-CONF v1'", path.string()));
  }
  if (line != "DIFUADA-CONF v1") throw VersionError(fmt::format("{}:1: unsupported config version", path.string()));
  std::vector<std::string> args;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string key, value, extra;
    if (!(ss >> key)) continue;
    if (key == "end") break;
    ss >> value;
    if (ss >> extra) throw ParseError(fmt::format("{}:{}: expected 'key value'", path.string(), lineno));
    args.push_back(value.empty() ? "--" + key : fmt::format("--{}={}", key, value));
  }
  return args;
}

std::string find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

std::string tour_string(const std::vector<std::size_t>& tour) {
  std::string s;
  for (std::size_t v : tour) s += fmt::format("{}{}", s.empty() ? "" : " ", v);
  return s;
}

Instance load_or_generate(const std::string& file, const std::string& problem, std::size_t n, std::uint64_t seed,
                          const GeneratorConfig& gen) {
  if (!file.empty()) {
    if (!fs::exists(file)) throw Error(fmt::format("instance file '{}' not found", file));
    Instance inst = read_instance(file);
    if (!problem.empty() && parse_problem_kind(problem) != kind_of(inst)) {
      throw ConfigError(fmt::format("instance is {}, but --problem {} was given", to_string(kind_of(inst)), problem));
    }
    return inst;
  }
  if (problem.empty()) throw ConfigError("give --instance or --problem with --n");
  return generate(parse_problem_kind(problem), n, seed, gen);
}

DenoiserParams require_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--ckpt is required");
  if (!fs::exists(path)) throw CheckpointError(fmt::format("checkpoint '{}' not found", path));
  return load_checkpoint(path);
}

void write_trace(const AdaptTrace& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << "k,objective,feasible,energy,wall_seconds\n";
  for (const auto& r : trace.records) {
    out << fmt::format("{},{:.9f},{},{:.9f},{:.6f}\n", r.k, r.objective, r.feasible ? 1 : 0, r.energy, r.wall_seconds);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"difuada: inference-time adaptation of a TSP-trained discrete diffusion solver"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "global seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0: DIFUADA_THREADS or 1)")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--config", g.config, "DIFUADA-CONF v1 file; its settings override flags");

  // gen
  auto* gen = app.add_subcommand("gen", "generate instance files");
  std::string gen_problem = "tsp";
  std::size_t gen_n = 10;
  int gen_count = 1;
  GeneratorConfig gen_cfg;
  gen->add_option("--problem", gen_problem, "tsp, pctsp, op or tsptw")->capture_default_str();
  gen->add_option("--n", gen_n, "node count")->capture_default_str();
  gen->add_option("--count", gen_count, "instances to write")->capture_default_str();
  add_generator(gen, gen_cfg);

  // train
  auto* tr = app.add_subcommand("train", "train the denoiser on Held-Karp labelled TSP instances");
  std::size_t tr_n = 10, tr_samples = 2000;
  ModelConfig tr_model;
  TrainOptions tr_opts;
  ScheduleOpts tr_sched;
  std::string tr_ckpt, tr_loss;
  tr->add_option("--n", tr_n, "TSP size")->capture_default_str();
  tr->add_option("--samples", tr_samples, "training instances")->capture_default_str();
  tr->add_option("--epochs", tr_opts.epochs, "epochs")->capture_default_str();
  tr->add_option("--lr", tr_opts.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--batch", tr_opts.batch_size, "minibatch size")->capture_default_str();
  tr->add_option("--layers", tr_model.layers, "gated layers")->capture_default_str();
  tr->add_option("--hidden", tr_model.hidden, "hidden width")->capture_default_str();
  tr->add_option("--embed", tr_model.embed_dim, "sinusoidal embedding width")->capture_default_str();
  tr->add_option("--ckpt", tr_ckpt, "checkpoint output (default <out-dir>/model.ckpt)");
  tr->add_option("--loss-out", tr_loss, "per-epoch loss CSV");
  add_schedule(tr, tr_sched);

  // solve
  auto* so = app.add_subcommand("solve", "adapt a trained model to one instance");
  std::string so_instance, so_problem, so_ckpt, so_trace;
  std::size_t so_n = 10;
  AdaptOpts so_adapt;
  ScheduleOpts so_sched;
  GeneratorConfig so_gen;
  so->add_option("--instance", so_instance, "instance file");
  so->add_option("--problem", so_problem, "problem kind (generates an instance when --instance is absent)");
  so->add_option("--n", so_n, "size of a generated instance")->capture_default_str();
  so->add_option("--ckpt", so_ckpt, "checkpoint");
  so->add_option("--trace-out", so_trace, "per-iteration trace CSV");
  add_adapt(so, so_adapt);
  add_schedule(so, so_sched);
  add_generator(so, so_gen);

  // oracle
  auto* orc = app.add_subcommand("oracle", "exact or reference solution of one instance");
  std::string orc_instance;
  int orc_ils = 1000;
  orc->add_option("--instance", orc_instance, "instance file")->required();
  orc->add_option("--ils-iterations", orc_ils, "ILS iterations beyond the exact range")->capture_default_str();

  // bench and ablate share one configuration
  BenchConfig bc;
  std::string bc_problem = "pctsp", bc_oracle = "exact", bc_ckpt;
  std::vector<std::string> bc_methods{"unguided", "guidance-only", "full-adapt"};
  AdaptOpts bc_adapt;
  ScheduleOpts bc_sched;
  auto setup_bench = [&](CLI::App* sub) {
    sub->add_option("--problem", bc_problem, "pctsp, op, tsp or tsptw")->capture_default_str();
    sub->add_option("--sizes", bc.sizes, "instance sizes")->capture_default_str()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->delimiter(',');
    sub->add_option("--instances", bc.n_instances, "instances per size")->capture_default_str();
    sub->add_option("--oracle", bc_oracle, "exact or ils")->capture_default_str();
    sub->add_option("--ils-iterations", bc.ils_iterations, "ILS iterations")->capture_default_str();
    sub->add_option("--ckpt", bc_ckpt, "checkpoint");
    add_adapt(sub, bc_adapt);
    add_schedule(sub, bc_sched);
    add_generator(sub, bc.generator);
  };
  auto* be = app.add_subcommand("bench", "benchmark methods against oracles");
  setup_bench(be);
  be->add_option("--methods", bc_methods, "unguided, guidance-only, full-adapt")->capture_default_str()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->delimiter(',');
  auto* ab = app.add_subcommand("ablate", "ablation sweeps");
  std::string ab_kind = "K-sweep";
  setup_bench(ab);
  ab->add_option("--kind", ab_kind, "K-sweep, tau-sweep, mu-sweep or guidance-onoff")->capture_default_str();

  // verify
  auto* ve = app.add_subcommand("verify", "theorem and equivalence suites");
  VerifyCounts ve_counts;
  ve->add_option("--theorem-count", ve_counts.theorem, "instances per theorem check")->capture_default_str();
  ve->add_option("--equivalence-count", ve_counts.equivalence, "fixtures per equivalence check")->capture_default_str();

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    if (const std::string conf = find_config(argc, argv); !conf.empty()) {
      const auto extra = read_config(conf);
      // CLI11 consumes the vector from the back; prepending puts config values last.
      args.insert(args.begin(), extra.rbegin(), extra.rend());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const int threads = resolve_threads(g.threads);
    if (*gen) {
      const ProblemKind kind = parse_problem_kind(gen_problem);
      for (int i = 0; i < gen_count; ++i) {
        Instance inst = generate(kind, gen_n, derive_seed(g.seed, static_cast<std::uint64_t>(i)), gen_cfg);
        base_of(inst).id = fmt::format("{}-{}-{:04d}", gen_problem, gen_n, i);
        const fs::path p = out_path(g, base_of(inst).id + ".inst");
        write_instance(inst, p);
        fmt::print("{}\n", p.string());
      }
      return 0;
    }
    if (*tr) {
      const NoiseSchedule schedule = tr_sched.make();
      fmt::print("labelling {} TSP-{} instances\n", tr_samples, tr_n);
      const auto data = make_tsp_dataset(tr_n, tr_samples, g.seed);
      tr_opts.seed = derive_seed(g.seed, 0x7A1);
      tr_opts.threads = threads;
      tr_opts.on_epoch = [](int epoch, double loss) { fmt::print("epoch {:3d}  loss {:.6f}\n", epoch, loss); };
      const TrainResult result = train(tr_model, data, schedule, tr_opts);
      const fs::path ckpt = tr_ckpt.empty() ? out_path(g, "model.ckpt") : fs::path(tr_ckpt);
      save_checkpoint(result.params, ckpt);
      if (!tr_loss.empty()) {
        std::ofstream out(tr_loss);
        out << "epoch,loss\n";
        for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) out << fmt::format("{},{:.9f}\n", e + 1, result.epoch_loss[e]);
      }
      fmt::print("checkpoint {}\n", ckpt.string());
      return 0;
    }
    if (*so) {
      const Instance inst = load_or_generate(so_instance, so_problem, so_n, g.seed, so_gen);
      const DenoiserParams params = require_checkpoint(so_ckpt);
      const NoiseSchedule schedule = so_sched.make();
      const AdaptResult r = run_adaptation(params, inst, schedule, so_adapt.resolve(), g.seed);
      const double obj = kind_of(inst) == ProblemKind::op ? -r.best.objective : r.best.objective;
      fmt::print("problem {}\nobjective {:.9f}\nbest_iteration {}\ntour {}\n", to_string(kind_of(inst)), obj,
                 r.best_iteration, tour_string(r.best.solution.tour));
      if (!so_trace.empty()) write_trace(r.trace, so_trace);
      return 0;
    }
    if (*orc) {
      if (!fs::exists(orc_instance)) throw Error(fmt::format("instance file '{}' not found", orc_instance));
      const Instance inst = read_instance(orc_instance);
      const OracleResult r = solve_oracle(inst, orc_ils, g.seed);
      fmt::print("problem {}\nvalue {:.9f}\nmethod {}\nexact {}\ntour {}\n", to_string(kind_of(inst)),
                 r.optimal_value, to_string(r.method), r.exact ? "yes" : "no", tour_string(r.optimal_solution.tour));
      return 0;
    }
    if (*be || *ab) {
      bc.kind = parse_problem_kind(bc_problem);
      bc.oracle = parse_oracle_kind(bc_oracle);
      bc.seed = g.seed;
      bc.threads = threads;
      bc.adapt = bc_adapt.resolve();
      bc.methods.clear();
      for (const auto& m : bc_methods) bc.methods.push_back(parse_bench_method(m));
      const DenoiserParams params = require_checkpoint(bc_ckpt);
      const NoiseSchedule schedule = bc_sched.make();
      if (*be) {
        const auto rows = run_benchmark(params, schedule, bc);
        const fs::path csv = out_path(g, fmt::format("bench_{}.csv", bc_problem));
        write_bench_csv(rows, csv);
        emit_report(rows, describe(bc), out_path(g, fmt::format("bench_{}.md", bc_problem)));
        for (const auto& r : rows) {
          fmt::print("{:14s} N={:<3d} gap {:8.3f}% (+-{:.3f})  feasible {:.3f}  {:.4f}s\n", r.method, r.size,
                     r.mean_gap, r.stderr_gap, r.feasible_rate, r.mean_seconds);
        }
        fmt::print("wrote {}\n", csv.string());
      } else {
        const AblationKind kind = parse_ablation_kind(ab_kind);
        const auto rows = run_ablation(kind, params, schedule, bc);
        const std::string stem = fmt::format("ablate_{}_{}", to_string(kind), bc_problem);
        const fs::path csv = out_path(g, stem + ".csv");
        write_ablation_csv(rows, csv);
        emit_ablation_report(rows, describe(bc), out_path(g, stem + ".md"));
        for (const auto& r : rows) {
          fmt::print("{} N={} x={:<6s} gap {:8.3f}% (+-{:.3f})\n", r.sweep, r.size, r.x, r.stats.mean_gap,
                     r.stats.stderr_gap);
        }
        fmt::print("wrote {}\n", csv.string());
      }
      return 0;
    }
    if (*ve) {
      bool all = true;
      for (const auto& line : run_verify(g.seed, ve_counts)) {
        fmt::print("[{}] {} ({} cases, {} failures)\n", line.passed ? "PASS" : "FAIL", line.name, line.cases,
                   line.failures);
        if (!line.passed) fmt::print("{}\n", line.detail);
        all = all && line.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
