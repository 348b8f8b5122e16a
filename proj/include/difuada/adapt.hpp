#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "difuada/decode.hpp"
#include "difuada/denoiser.hpp"
#include "difuada/diffusion.hpp"
#include "difuada/errors.hpp"
#include "difuada/guidance.hpp"
#include "difuada/instances.hpp"

namespace difuada {

/// `full` walks every step from the renoise level down to 0; `jump` takes a
/// single guided step from the renoise level straight to 0.
enum class TravelMode { full, jump };

std::string_view to_string(TravelMode mode);
TravelMode parse_travel_mode(std::string_view name);

struct AdaptConfig {
  int K = 20;             // recursive iterations after the initial pass; 0 keeps the initial pass only
  int renoise_level = 5;  // i
  GuidanceConfig guidance;
  int infer_steps = 10;   // reverse steps of the initial pass
  bool track_best = true;
  TravelMode mode = TravelMode::jump;
  DecodeOptions decode;

  void validate(const NoiseSchedule& schedule) const;
};

struct AdaptRecord {
  int k = 0;
  double objective = 0.0;  // phi_discrete of this iteration's decode
  bool feasible = false;
  double energy = 0.0;     // smoothed energy of the guided prediction that was decoded
  double wall_seconds = 0.0;  // since the start of the run
};

struct AdaptTrace {
  std::vector<AdaptRecord> records;  // K + 1 entries
};

/// Final clean state of a reverse pass plus the guided x0 prediction of its
/// last step, which is what gets decoded.
struct DenoisePass {
  BinaryState x0;
  Heatmap guided;
};

struct AdaptResult {
  DecodedTour best;
  AdaptTrace trace;
  int best_iteration = 0;
};

/// Raised when no iteration produced a feasible decode; the trace is kept.
class AdaptInfeasibleError : public InfeasibleInstanceError {
 public:
  AdaptInfeasibleError(const std::string& what, AdaptTrace trace)
      : InfeasibleInstanceError(what), trace_(std::move(trace)) {}
  const AdaptTrace& trace() const { return trace_; }

 private:
  AdaptTrace trace_;
};

/// x_T ~ Bernoulli(1/2) per edge, then guided reverse steps over
/// inference_timesteps(T, infer_steps) down to t = 0.
DenoisePass initial_denoise(const DenoiserParams& params, const Instance& instance, const NoiseSchedule& schedule,
                            const AdaptConfig& cfg, Rng& rng);

/// Renoise a clean state to level i, then guided denoising back to 0.
DenoisePass travel_iteration(const BinaryState& x0, const DenoiserParams& params, const Instance& instance,
                             const NoiseSchedule& schedule, const AdaptConfig& cfg, Rng& rng);

/// Initial pass plus K travel iterations. Each iterate's guided prediction is
/// decoded; the decoded solution (not the sampled state) is what gets
/// renoised next.
AdaptResult run_adaptation(const DenoiserParams& params, const Instance& instance, const NoiseSchedule& schedule,
                           const AdaptConfig& cfg, std::uint64_t seed);

}  // namespace difuada
