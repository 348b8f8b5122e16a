#include "difuada/denoiser.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "difuada/errors.hpp"
#include "difuada/oracles.hpp"

namespace difuada {

namespace {

using Eigen::Index;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kNormEps = 1e-5;
constexpr std::string_view kCkptMagic = "DIFUADA-CKPT";
constexpr std::string_view kCkptVersion = "v1";

Linear make_linear(int out, int in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear lin{Eigen::MatrixXd(out, in), Eigen::MatrixXd(out, 1)};
  for (Index i = 0; i < lin.weight.size(); ++i) lin.weight.data()[i] = rng.uniform(-bound, bound);
  for (Index i = 0; i < lin.bias.size(); ++i) lin.bias.data()[i] = rng.uniform(-bound, bound);
  return lin;
}

LayerNormParams make_norm(int d) {
  return LayerNormParams{Eigen::MatrixXd::Ones(d, 1), Eigen::MatrixXd::Zero(d, 1)};
}

Mat linear_fwd(const Mat& x, const Linear& lin) {
  Mat y = x * lin.weight.transpose();
  y.rowwise() += lin.bias.col(0).transpose();
  return y;
}

// Accumulates parameter gradients and returns dL/dx.
Mat linear_bwd(const Mat& dy, const Mat& x, const Linear& lin, Linear& grad) {
  grad.weight.noalias() += dy.transpose() * x;
  grad.bias.col(0) += dy.colwise().sum().transpose();
  return dy * lin.weight;
}

struct NormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

Mat norm_fwd(const Mat& x, const LayerNormParams& p, NormCache& cache) {
  const Index rows = x.rows();
  const Index d = x.cols();
  cache.xhat.resize(rows, d);
  cache.inv_std.resize(rows);
  Mat y(rows, d);
  const auto gamma = p.gamma.col(0).transpose();
  const auto beta = p.beta.col(0).transpose();
  for (Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    cache.inv_std(r) = inv;
    cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
    y.row(r) = cache.xhat.row(r).cwiseProduct(gamma) + beta;
  }
  return y;
}

Mat norm_bwd(const Mat& dy, const NormCache& cache, const LayerNormParams& p, LayerNormParams& grad) {
  const Index rows = dy.rows();
  const Index d = dy.cols();
  grad.gamma.col(0) += dy.cwiseProduct(cache.xhat).colwise().sum().transpose();
  grad.beta.col(0) += dy.colwise().sum().transpose();
  const auto gamma = p.gamma.col(0).transpose();
  Mat dx(rows, d);
  for (Index r = 0; r < rows; ++r) {
    const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(gamma);
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) = cache.inv_std(r) * (dxhat.array() - m1 - cache.xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

Mat relu_bwd(const Mat& dy, const Mat& pre) {
  return (pre.array() > 0.0).select(dy, Mat::Zero(dy.rows(), dy.cols()));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Sinusoidal features of a scalar: features alternate sin/cos over a
// geometric frequency ladder.
void sinusoid(double value, double scale, Eigen::Ref<Eigen::RowVectorXd> out) {
  const Index dim = out.size();
  for (Index i = 0; i < dim; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
    const double arg = value * scale / freq;
    out(i) = (i % 2 == 0) ? std::sin(arg) : std::cos(arg);
  }
}

struct LayerCache {
  Mat h_in, e_in;
  Mat ah, bh, uh, vh;
  Mat e_hat, gate, h_hat;
  Mat hn, en;  // normalised, pre-activation
  NormCache norm_h, norm_e;
};

struct ForwardCache {
  std::size_t n = 0;
  EmbeddedInputs in;
  Mat time_pre, time_act;
  std::vector<LayerCache> layers;
  Mat e_final;
  NormCache norm_out;
  Mat out_pre;
  Mat out_act;
  Mat logits;      // N^2 x 2
  Eigen::MatrixXd zsym;  // N x N symmetrised logit difference
};

void check_config(const ModelConfig& c) {
  if (c.layers < 1 || c.hidden < 1 || c.embed_dim < 1) {
    throw ConfigError(fmt::format("model config must be positive, got layers={} hidden={} embed={}",
                                  c.layers, c.hidden, c.embed_dim));
  }
}

ForwardCache run_forward(const DenoiserParams& params, const TspInstance& instance, const BinaryState& xt,
                         int t) {
  const std::size_t n = instance.size();
  if (xt.size() != n) {
    throw DimensionError(fmt::format("state has {} nodes, instance has {}", xt.size(), n));
  }
  if (xt.t != t) throw DimensionError(fmt::format("state timestep {} does not match t = {}", xt.t, t));
  const auto N = static_cast<Index>(n);

  ForwardCache c;
  c.n = n;
  c.in = embed_inputs(instance, xt, t, params.config.embed_dim);

  Mat h = linear_fwd(c.in.node, params.node_in);
  Mat e = linear_fwd(c.in.edge, params.edge_in);
  c.time_pre = linear_fwd(c.in.time, params.time_in);
  c.time_act = relu(c.time_pre);

  c.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    auto& lc = c.layers[l];
    lc.h_in = h;
    lc.e_in = e;
    lc.ah = linear_fwd(h, p.src);
    lc.bh = linear_fwd(h, p.dst);
    lc.uh = linear_fwd(h, p.self);
    lc.vh = linear_fwd(h, p.neigh);
    lc.e_hat = linear_fwd(e, p.edge);
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) lc.e_hat.row(i * N + j) += lc.ah.row(i) + lc.bh.row(j);
    }
    lc.gate = lc.e_hat.unaryExpr([](double z) { return sigmoid(z); });
    lc.h_hat = lc.uh;
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) {
        if (i != j) lc.h_hat.row(i) += lc.gate.row(i * N + j).cwiseProduct(lc.vh.row(j));
      }
    }
    lc.hn = norm_fwd(lc.h_hat, p.norm_h, lc.norm_h);
    lc.en = norm_fwd(lc.e_hat, p.norm_e, lc.norm_e);
    h = lc.h_in + relu(lc.hn);
    const Mat tl = linear_fwd(c.time_act, p.time);
    e = lc.e_in + relu(lc.en);
    e.rowwise() += tl.row(0);
  }
  c.e_final = e;
  c.out_pre = norm_fwd(e, params.norm_out, c.norm_out);
  c.out_act = relu(c.out_pre);
  c.logits = linear_fwd(c.out_act, params.head);

  c.zsym = Eigen::MatrixXd::Zero(N, N);
  for (Index i = 0; i < N; ++i) {
    for (Index j = i + 1; j < N; ++j) {
      const double zij = c.logits(i * N + j, 1) - c.logits(i * N + j, 0);
      const double zji = c.logits(j * N + i, 1) - c.logits(j * N + i, 0);
      c.zsym(i, j) = c.zsym(j, i) = 0.5 * (zij + zji);
    }
  }
  return c;
}

// Back-propagates dL/dzsym (upper triangle used) into parameter gradients.
void run_backward(const DenoiserParams& params, const ForwardCache& c, const Eigen::MatrixXd& dz,
                  DenoiserParams& grads) {
  const auto N = static_cast<Index>(c.n);
  Mat dlogits = Mat::Zero(N * N, 2);
  for (Index i = 0; i < N; ++i) {
    for (Index j = i + 1; j < N; ++j) {
      const double g = 0.5 * dz(i, j);
      dlogits(i * N + j, 1) += g;
      dlogits(i * N + j, 0) -= g;
      dlogits(j * N + i, 1) += g;
      dlogits(j * N + i, 0) -= g;
    }
  }
  Mat d_act = linear_bwd(dlogits, c.out_act, params.head, grads.head);
  Mat de = norm_bwd(relu_bwd(d_act, c.out_pre), c.norm_out, params.norm_out, grads.norm_out);
  Mat dh = Mat::Zero(N, params.config.hidden);
  Mat dtime_act = Mat::Zero(1, params.config.hidden);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& p = params.layers[li];
    auto& g = grads.layers[li];
    const auto& lc = c.layers[li];

    // e_out = e_in + relu(en) + time(tau)
    const Mat dtl = de.colwise().sum();
    dtime_act += linear_bwd(dtl, c.time_act, p.time, g.time);
    Mat de_hat = norm_bwd(relu_bwd(de, lc.en), lc.norm_e, p.norm_e, g.norm_e);
    Mat de_in = de;

    // h_out = h_in + relu(hn)
    const Mat dh_hat = norm_bwd(relu_bwd(dh, lc.hn), lc.norm_h, p.norm_h, g.norm_h);
    Mat dh_in = dh;

    // h_hat = U h + sum_{j != i} gate_ij * V h_j
    const Mat& duh = dh_hat;
    Mat dvh = Mat::Zero(N, lc.vh.cols());
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) {
        if (i == j) continue;
        const Index r = i * N + j;
        const auto gate = lc.gate.row(r);
        dvh.row(j) += dh_hat.row(i).cwiseProduct(gate);
        const auto dgate = dh_hat.row(i).cwiseProduct(lc.vh.row(j));
        de_hat.row(r) += dgate.cwiseProduct(gate.cwiseProduct((1.0 - gate.array()).matrix()));
      }
    }

    // e_hat = C e + A h_i + B h_j
    Mat dah = Mat::Zero(N, lc.ah.cols());
    Mat dbh = Mat::Zero(N, lc.bh.cols());
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) {
        dah.row(i) += de_hat.row(i * N + j);
        dbh.row(j) += de_hat.row(i * N + j);
      }
    }
    de_in += linear_bwd(de_hat, lc.e_in, p.edge, g.edge);
    dh_in += linear_bwd(dah, lc.h_in, p.src, g.src);
    dh_in += linear_bwd(dbh, lc.h_in, p.dst, g.dst);
    dh_in += linear_bwd(duh, lc.h_in, p.self, g.self);
    dh_in += linear_bwd(dvh, lc.h_in, p.neigh, g.neigh);

    de = std::move(de_in);
    dh = std::move(dh_in);
  }

  linear_bwd(dh, c.in.node, params.node_in, grads.node_in);
  linear_bwd(de, c.in.edge, params.edge_in, grads.edge_in);
  linear_bwd(relu_bwd(dtime_act, c.time_pre), c.in.time, params.time_in, grads.time_in);
}

// Mean BCE over i<j pairs; writes dL/dzsym scaled by `weight`.
double edge_bce(const Eigen::MatrixXd& zsym, const BinaryState& label, double weight, Eigen::MatrixXd& dz) {
  const Index N = zsym.rows();
  const double pairs = static_cast<double>(N * (N - 1) / 2);
  dz = Eigen::MatrixXd::Zero(N, N);
  double loss = 0.0;
  for (Index i = 0; i < N; ++i) {
    for (Index j = i + 1; j < N; ++j) {
      const double z = zsym(i, j);
      const double y = label(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1.0 : 0.0;
      // log(1 + e^z) - y z, computed stably
      const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      loss += softplus - y * z;
      dz(i, j) = weight * (sigmoid(z) - y) / pairs;
    }
  }
  return loss / pairs;
}

void add_into(DenoiserParams& acc, const DenoiserParams& other) {
  std::vector<const Eigen::MatrixXd*> src;
  other.for_each([&](const std::string&, const Eigen::MatrixXd& m) { src.push_back(&m); });
  std::size_t k = 0;
  acc.for_each([&](const std::string&, Eigen::MatrixXd& m) { m += *src[k++]; });
}

}  // namespace

void DenoiserParams::for_each(const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn) {
  auto lin = [&](const std::string& name, Linear& l) {
    fn(name + ".weight", l.weight);
    fn(name + ".bias", l.bias);
  };
  auto norm = [&](const std::string& name, LayerNormParams& p) {
    fn(name + ".gamma", p.gamma);
    fn(name + ".beta", p.beta);
  };
  lin("node_in", node_in);
  lin("edge_in", edge_in);
  lin("time_in", time_in);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = fmt::format("layer{}.", l);
    auto& p = layers[l];
    lin(prefix + "src", p.src);
    lin(prefix + "dst", p.dst);
    lin(prefix + "edge", p.edge);
    lin(prefix + "self", p.self);
    lin(prefix + "neigh", p.neigh);
    lin(prefix + "time", p.time);
    norm(prefix + "norm_h", p.norm_h);
    norm(prefix + "norm_e", p.norm_e);
  }
  norm("norm_out", norm_out);
  lin("head", head);
}

void DenoiserParams::for_each(
    const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const {
  const_cast<DenoiserParams*>(this)->for_each(
      [&](const std::string& name, Eigen::MatrixXd& m) { fn(name, m); });
}

std::size_t DenoiserParams::parameter_count() const {
  std::size_t count = 0;
  for_each([&](const std::string&, const Eigen::MatrixXd& m) { count += static_cast<std::size_t>(m.size()); });
  return count;
}

DenoiserParams DenoiserParams::zeros_like() const {
  DenoiserParams z = *this;
  z.for_each([](const std::string&, Eigen::MatrixXd& m) { m.setZero(); });
  return z;
}

bool DenoiserParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Eigen::MatrixXd& m) { ok = ok && m.allFinite(); });
  return ok;
}

DenoiserParams init_params(const ModelConfig& config, std::uint64_t seed) {
  check_config(config);
  Rng rng(derive_seed(seed, 0x5eed));
  const int d = config.hidden;
  const int emb = config.embed_dim;
  DenoiserParams p;
  p.config = config;
  p.node_in = make_linear(d, emb, rng);
  p.edge_in = make_linear(d, emb + 2, rng);
  p.time_in = make_linear(d, emb, rng);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& layer : p.layers) {
    layer.src = make_linear(d, d, rng);
    layer.dst = make_linear(d, d, rng);
    layer.edge = make_linear(d, d, rng);
    layer.self = make_linear(d, d, rng);
    layer.neigh = make_linear(d, d, rng);
    layer.time = make_linear(d, d, rng);
    layer.norm_h = make_norm(d);
    layer.norm_e = make_norm(d);
  }
  p.norm_out = make_norm(d);
  p.head = Linear{Eigen::MatrixXd::Zero(2, d), Eigen::MatrixXd::Zero(2, 1)};
  return p;
}

EmbeddedInputs embed_inputs(const TspInstance& instance, const BinaryState& xt, int t, int embed_dim) {
  const std::size_t n = instance.size();
  const auto N = static_cast<Index>(n);
  const Index half = std::max(1, embed_dim / 2);
  EmbeddedInputs in;
  in.node = Eigen::MatrixXd::Zero(N, embed_dim);
  for (Index i = 0; i < N; ++i) {
    const auto& pt = instance.points[static_cast<std::size_t>(i)];
    Eigen::RowVectorXd fx(half), fy(embed_dim - half);
    sinusoid(pt.x, 2.0 * std::numbers::pi, fx);
    if (fy.size() > 0) sinusoid(pt.y, 2.0 * std::numbers::pi, fy);
    in.node.block(i, 0, 1, half) = fx;
    if (fy.size() > 0) in.node.block(i, half, 1, fy.size()) = fy;
  }
  const DistanceMatrix w = distance_matrix(instance);
  in.edge = Eigen::MatrixXd::Zero(N * N, embed_dim + 2);
  Eigen::RowVectorXd fd(embed_dim);
  for (Index i = 0; i < N; ++i) {
    for (Index j = 0; j < N; ++j) {
      const Index r = i * N + j;
      in.edge(r, 0) = xt(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1.0 : -1.0;
      in.edge(r, 1) = w(i, j);
      sinusoid(w(i, j), 2.0 * std::numbers::pi, fd);
      in.edge.block(r, 2, 1, embed_dim) = fd;
    }
  }
  in.time = Eigen::MatrixXd::Zero(1, embed_dim);
  // Transformer-style timestep features: sin on the first half, cos on the second.
  const Index th = embed_dim / 2;
  for (Index k = 0; k < embed_dim; ++k) {
    const Index slot = k < th ? k : k - th;
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(slot) / std::max<Index>(1, th));
    in.time(0, k) = k < th ? std::sin(t * freq) : std::cos(t * freq);
  }
  return in;
}

Heatmap forward(const DenoiserParams& params, const TspInstance& instance, const BinaryState& xt, int t) {
  const ForwardCache c = run_forward(params, instance, xt, t);
  const auto N = static_cast<Index>(c.n);
  Heatmap out = Heatmap::zeros(c.n);
  for (Index i = 0; i < N; ++i) {
    for (Index j = i + 1; j < N; ++j) out.probs(i, j) = out.probs(j, i) = sigmoid(c.zsym(i, j));
  }
  return out;
}

LossAndGrads loss_and_grads(const DenoiserParams& params, const std::vector<NoisySample>& batch) {
  if (batch.empty()) throw ConfigError("loss_and_grads: empty batch");
  LossAndGrads out{0.0, params.zeros_like()};
  const double weight = 1.0 / static_cast<double>(batch.size());
  Eigen::MatrixXd dz;
  for (const auto& sample : batch) {
    const ForwardCache c = run_forward(params, *sample.instance, sample.xt, sample.xt.t);
    const double loss = edge_bce(c.zsym, *sample.label, weight, dz);
    if (!std::isfinite(loss)) {
      throw NumericError(fmt::format("non-finite loss on sample '{}'", sample.id));
    }
    out.loss += weight * loss;
    run_backward(params, c, dz, out.grads);
  }
  return out;
}

namespace {

std::vector<NoisySample> corrupt(const std::vector<const TrainSample*>& batch, const NoiseSchedule& schedule,
                                 Rng& rng) {
  std::vector<NoisySample> noisy;
  noisy.reserve(batch.size());
  for (const TrainSample* s : batch) {
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(schedule.steps())));
    noisy.push_back(NoisySample{&s->instance, &s->label, q_sample(s->label, t, schedule, rng), s->instance.id});
  }
  return noisy;
}

}  // namespace

LossAndGrads loss_and_grads(const DenoiserParams& params, const std::vector<TrainSample>& batch,
                            const NoiseSchedule& schedule, Rng& rng) {
  std::vector<const TrainSample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  return loss_and_grads(params, corrupt(ptrs, schedule, rng));
}

TrainResult train(const ModelConfig& config, const std::vector<TrainSample>& dataset,
                  const NoiseSchedule& schedule, const TrainOptions& options) {
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  if (options.batch_size < 1 || options.epochs < 0) throw ConfigError("train: invalid batch size or epochs");
  for (const auto& s : dataset) {
    if (s.label.size() != s.instance.size()) throw ConfigError("train: label size mismatch");
    for (std::size_t v = 0; v < s.label.size(); ++v) {
      int degree = 0;
      for (std::size_t u = 0; u < s.label.size(); ++u) degree += s.label(u, v) ? 1 : 0;
      if (degree != 2) {
        throw ConfigError(fmt::format("train: label of '{}' is not a tour (node {} has degree {})",
                                      s.instance.id, v, degree));
      }
    }
  }

  TrainResult result{init_params(config, options.seed), {}};
  DenoiserParams& params = result.params;
  DenoiserParams m1 = params.zeros_like();
  DenoiserParams m2 = params.zeros_like();
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;

  Rng rng(derive_seed(options.seed, 0x7a11));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  double initial_loss = -1.0;
  int diverged_epochs = 0;
  const int threads = std::max(1, options.threads);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      std::vector<const TrainSample*> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&dataset[order[k]]);
      const auto noisy = corrupt(batch, schedule, rng);

      LossAndGrads lg;
      if (threads == 1 || noisy.size() < 2) {
        lg = loss_and_grads(params, noisy);
      } else {
        // Fixed chunking and in-order reduction keep results independent of timing.
        const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(threads), noisy.size());
        std::vector<LossAndGrads> parts(chunks);
        std::vector<std::thread> pool;
        for (std::size_t c = 0; c < chunks; ++c) {
          pool.emplace_back([&, c] {
            const std::size_t lo = c * noisy.size() / chunks;
            const std::size_t hi = (c + 1) * noisy.size() / chunks;
            std::vector<NoisySample> part(noisy.begin() + static_cast<std::ptrdiff_t>(lo),
                                          noisy.begin() + static_cast<std::ptrdiff_t>(hi));
            parts[c] = loss_and_grads(params, part);
            const double scale = static_cast<double>(hi - lo) / static_cast<double>(noisy.size());
            parts[c].loss *= scale;
            parts[c].grads.for_each([scale](const std::string&, Eigen::MatrixXd& m) { m *= scale; });
          });
        }
        for (auto& th : pool) th.join();
        lg = std::move(parts[0]);
        for (std::size_t c = 1; c < chunks; ++c) {
          lg.loss += parts[c].loss;
          add_into(lg.grads, parts[c].grads);
        }
      }
      epoch_loss += lg.loss * static_cast<double>(noisy.size());
      seen += noisy.size();

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      std::vector<Eigen::MatrixXd*> pm, pv, pg;
      m1.for_each([&](const std::string&, Eigen::MatrixXd& m) { pm.push_back(&m); });
      m2.for_each([&](const std::string&, Eigen::MatrixXd& m) { pv.push_back(&m); });
      lg.grads.for_each([&](const std::string&, Eigen::MatrixXd& m) { pg.push_back(&m); });
      std::size_t k = 0;
      params.for_each([&](const std::string&, Eigen::MatrixXd& p) {
        Eigen::MatrixXd& m = *pm[k];
        Eigen::MatrixXd& v = *pv[k];
        const Eigen::MatrixXd& g = *pg[k];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        p.array() -= options.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
        ++k;
      });
    }
    const double mean_loss = epoch_loss / static_cast<double>(seen);
    result.epoch_loss.push_back(mean_loss);
    if (options.on_epoch) options.on_epoch(epoch, mean_loss);
    if (!std::isfinite(mean_loss) || !params.all_finite()) {
      throw TrainingDivergedError(fmt::format("training produced non-finite values in epoch {}", epoch));
    }
    if (initial_loss < 0.0) initial_loss = mean_loss;
    diverged_epochs = mean_loss > 10.0 * initial_loss ? diverged_epochs + 1 : 0;
    if (diverged_epochs >= 3) {
      throw TrainingDivergedError(fmt::format(
          "training loss {} exceeded 10x the initial loss {} for 3 epochs", mean_loss, initial_loss));
    }
  }
  return result;
}

std::vector<TrainSample> make_tsp_dataset(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<TrainSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    TspInstance inst = gen_tsp(n, derive_seed(seed, k));
    const OracleResult opt = held_karp_tsp(distance_matrix(inst));
    inst.reference_optimum = opt.optimal_value;
    BinaryState label = BinaryState::from_heatmap(Heatmap::from_tour(n, opt.optimal_solution.tour));
    out.push_back(TrainSample{std::move(inst), std::move(label)});
  }
  return out;
}

void save_checkpoint(const DenoiserParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(fmt::format("cannot open '{}' for writing", path.string()));
  out << kCkptMagic << ' ' << kCkptVersion << '\n';
  out << "config " << params.config.layers << ' ' << params.config.hidden << ' ' << params.config.embed_dim
      << '\n';
  params.for_each([&](const std::string& name, const Eigen::MatrixXd& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
      out << '\n';
    }
  });
  out << "end\n";
  if (!out) throw CheckpointError(fmt::format("write to '{}' failed", path.string()));
}

DenoiserParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(fmt::format("cannot open checkpoint '{}'", path.string()));
  auto fail = [&](const std::string& msg) -> void {
    throw CheckpointError(fmt::format("{}: {}", path.string(), msg));
  };
  std::string magic, version;
  in >> magic >> version;
  if (magic != kCkptMagic) fail("missing DIFUADA-CKPT header");
  if (version != kCkptVersion) fail(fmt::format("unsupported checkpoint version '{}'", version));
  std::string key;
  ModelConfig config;
  in >> key >> config.layers >> config.hidden >> config.embed_dim;
  if (!in || key != "config") fail("missing config record");
  if (config.layers < 1 || config.hidden < 1 || config.embed_dim < 1) fail("invalid model config");

  DenoiserParams params = init_params(config, 0);
  params.for_each([&](const std::string& name, Eigen::MatrixXd& m) {
    std::string tag, stored_name;
    Index rows = 0, cols = 0;
    in >> tag >> stored_name >> rows >> cols;
    if (!in || tag != "tensor") fail(fmt::format("truncated before tensor '{}'", name));
    if (stored_name != name) fail(fmt::format("expected tensor '{}', found '{}'", name, stored_name));
    if (rows != m.rows() || cols != m.cols()) {
      fail(fmt::format("tensor '{}' has shape {}x{}, expected {}x{}", name, rows, cols, m.rows(), m.cols()));
    }
    std::string token;
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        if (!(in >> token)) fail(fmt::format("truncated inside tensor '{}'", name));
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc{} || ptr != token.data() + token.size()) {
          fail(fmt::format("bad number '{}' in tensor '{}'", token, name));
        }
        m(r, c) = value;
      }
    }
  });
  in >> key;
  if (key != "end") fail("missing end marker");
  if (!params.all_finite()) fail("checkpoint contains non-finite values");
  return params;
}

DenoiserParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  DenoiserParams params = load_checkpoint(path);
  if (!(params.config == expected)) {
    throw CheckpointError(fmt::format(
        "checkpoint '{}' has config layers={} hidden={} embed={}, requested layers={} hidden={} embed={}",
        path.string(), params.config.layers, params.config.hidden, params.config.embed_dim, expected.layers,
        expected.hidden, expected.embed_dim));
  }
  return params;
}

}  // namespace difuada
