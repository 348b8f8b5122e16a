#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "difuada/diffusion.hpp"
#include "difuada/energy.hpp"
#include "difuada/instances.hpp"
#include "difuada/rng.hpp"

namespace difuada {

struct ModelConfig {
  int layers = 4;
  int hidden = 32;
  int embed_dim = 32;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Linear {
  Eigen::MatrixXd weight;  // out x in
  Eigen::MatrixXd bias;    // out x 1
};

struct LayerNormParams {
  Eigen::MatrixXd gamma;  // d x 1
  Eigen::MatrixXd beta;   // d x 1
};

struct GatedLayerParams {
  Linear src;    // A: source-node term of the edge update
  Linear dst;    // B: destination-node term of the edge update
  Linear edge;   // C
  Linear self;   // U
  Linear neigh;  // V
  Linear time;
  LayerNormParams norm_h;
  LayerNormParams norm_e;
};

/// Parameters of the anisotropic gated graph denoiser. The same layout is
/// reused for gradients and optimizer moments.
struct DenoiserParams {
  ModelConfig config;
  Linear node_in;
  Linear edge_in;
  Linear time_in;
  std::vector<GatedLayerParams> layers;
  LayerNormParams norm_out;
  Linear head;  // two logits per edge

  /// Visits every tensor with a stable name, in a fixed order.
  void for_each(const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn);
  void for_each(const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const;

  std::size_t parameter_count() const;
  DenoiserParams zeros_like() const;
  bool all_finite() const;
};

/// Fan-in uniform initialisation; the output head starts at zero so an
/// untrained model predicts 1/2 everywhere.
DenoiserParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Node and edge inputs before the first projection.
struct EmbeddedInputs {
  Eigen::MatrixXd node;  // N x embed_dim, sinusoidal coordinate features
  Eigen::MatrixXd edge;  // N^2 x (embed_dim + 2): [x_t bit, distance, sinusoidal distance]
  Eigen::MatrixXd time;  // 1 x embed_dim
};

EmbeddedInputs embed_inputs(const TspInstance& instance, const BinaryState& xt, int t, int embed_dim);

/// Predicted p(x0 = 1 | x_t) per edge, symmetric with zero diagonal.
Heatmap forward(const DenoiserParams& params, const TspInstance& instance, const BinaryState& xt, int t);

struct TrainSample {
  TspInstance instance;
  BinaryState label;  // optimal tour adjacency
};

/// A training sample after corruption, with its timestep fixed.
struct NoisySample {
  const TspInstance* instance = nullptr;
  const BinaryState* label = nullptr;
  BinaryState xt;
  std::string id;
};

struct LossAndGrads {
  double loss = 0.0;
  DenoiserParams grads;
};

/// Mean per-edge binary cross-entropy over the batch and its exact gradient.
LossAndGrads loss_and_grads(const DenoiserParams& params, const std::vector<NoisySample>& batch);

/// Draws t uniformly from {1..T} and x_t ~ q(x_t | label) per sample, then
/// evaluates loss_and_grads.
LossAndGrads loss_and_grads(const DenoiserParams& params, const std::vector<TrainSample>& batch,
                            const NoiseSchedule& schedule, Rng& rng);

struct TrainOptions {
  int epochs = 30;
  double lr = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int threads = 1;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Adam (beta1 = 0.9, beta2 = 0.999) over shuffled minibatches.
TrainResult train(const ModelConfig& config, const std::vector<TrainSample>& dataset,
                  const NoiseSchedule& schedule, const TrainOptions& options);

/// Held-Karp-labelled random TSP instances.
std::vector<TrainSample> make_tsp_dataset(std::size_t n, std::size_t count, std::uint64_t seed);

void save_checkpoint(const DenoiserParams& params, const std::filesystem::path& path);
DenoiserParams load_checkpoint(const std::filesystem::path& path);
/// Throws CheckpointError if the stored configuration differs from `expected`.
DenoiserParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace difuada
