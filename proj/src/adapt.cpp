#include "difuada/adapt.hpp"

#include <chrono>

#include <fmt/format.h>

namespace difuada {

std::string_view to_string(TravelMode mode) { return mode == TravelMode::full ? "full" : "jump"; }

TravelMode parse_travel_mode(std::string_view name) {
  if (name == "full") return TravelMode::full;
  if (name == "jump") return TravelMode::jump;
  throw ConfigError(fmt::format("unknown travel mode '{}', expected full or jump", name));
}

void AdaptConfig::validate(const NoiseSchedule& schedule) const {
  if (K < 0) throw ConfigError(fmt::format("K must be >= 0, got {}", K));
  if (renoise_level < 1 || renoise_level > schedule.steps()) {
    throw ConfigError(fmt::format("renoise level {} outside [1, {}]", renoise_level, schedule.steps()));
  }
  if (infer_steps < 1 || infer_steps > schedule.steps()) {
    throw ConfigError(fmt::format("inference steps {} outside [1, {}]", infer_steps, schedule.steps()));
  }
  if (decode.max_two_opt_passes < 0) throw ConfigError("max 2-opt passes must be >= 0");
  guidance.validate();
}

namespace {

DenoisePass denoise_from(BinaryState x, const std::vector<int>& starts, const DenoiserParams& params,
                         const Instance& instance, const NoiseSchedule& schedule, const GuidanceConfig& gcfg,
                         Rng& rng) {
  DenoisePass pass;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const int t = starts[k];
    const int s = k + 1 < starts.size() ? starts[k + 1] : 0;
    x = guided_reverse_step(params, x, t, instance, schedule, gcfg, rng, s, &pass.guided);
  }
  pass.x0 = std::move(x);
  return pass;
}

}  // namespace

DenoisePass initial_denoise(const DenoiserParams& params, const Instance& instance, const NoiseSchedule& schedule,
                            const AdaptConfig& cfg, Rng& rng) {
  const std::size_t n = base_of(instance).size();
  BinaryState xT = uniform_state(n, schedule.steps(), rng);
  return denoise_from(std::move(xT), inference_timesteps(schedule.steps(), cfg.infer_steps), params, instance,
                      schedule, cfg.guidance, rng);
}

DenoisePass travel_iteration(const BinaryState& x0, const DenoiserParams& params, const Instance& instance,
                             const NoiseSchedule& schedule, const AdaptConfig& cfg, Rng& rng) {
  if (x0.t != 0) throw ConfigError("travel_iteration expects a clean state");
  const int level = cfg.renoise_level;
  BinaryState xi = renoise(x0, level, schedule, rng);
  std::vector<int> starts;
  if (cfg.mode == TravelMode::jump) {
    starts.push_back(level);
  } else {
    for (int t = level; t >= 1; --t) starts.push_back(t);
  }
  return denoise_from(std::move(xi), starts, params, instance, schedule, cfg.guidance, rng);
}

AdaptResult run_adaptation(const DenoiserParams& params, const Instance& instance, const NoiseSchedule& schedule,
                           const AdaptConfig& cfg, std::uint64_t seed) {
  cfg.validate(schedule);
  validate(instance);
  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  const std::size_t n = base_of(instance).size();

  AdaptResult result;
  bool have_feasible = false;
  DenoisePass pass = initial_denoise(params, instance, schedule, cfg, rng);
  for (int k = 0;; ++k) {
    DecodedTour decoded = decode(pass.guided, instance, cfg.decode);
    AdaptRecord rec;
    rec.k = k;
    rec.objective = decoded.objective;
    rec.feasible = decoded.feasible;
    rec.energy = phi(instance, pass.guided, cfg.guidance.energy);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.records.push_back(rec);

    if (decoded.feasible) {
      const bool better = !have_feasible || decoded.objective < result.best.objective;
      if (!cfg.track_best || better) {
        result.best = decoded;
        result.best_iteration = k;
      }
      have_feasible = true;
    }
    if (k == cfg.K) break;
    const BinaryState clean = BinaryState::from_heatmap(Heatmap::from_tour(n, decoded.solution.tour), 0);
    pass = travel_iteration(clean, params, instance, schedule, cfg, rng);
  }
  if (!have_feasible) {
    throw AdaptInfeasibleError(
        fmt::format("no feasible solution decoded for instance '{}' in {} iterations", base_of(instance).id,
                    cfg.K + 1),
        std::move(result.trace));
  }
  return result;
}

}  // namespace difuada
