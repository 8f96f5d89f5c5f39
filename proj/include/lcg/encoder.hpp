#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcg/geometry.hpp"

namespace lcg::encoder {

// Width of the pooled geometric feature (last shared-MLP channel).
constexpr std::size_t kGeomDim = 256;

enum class Mode { Train, Eval };

struct LinearLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

struct BatchNorm {
  std::size_t ch = 0;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Shared per-point MLP 3 -> 64 -> 128 -> 256, each stage
// linear + batch norm + ReLU, followed by the residual projection
// W_proj (d x 256) and the scalar gate lambda. lambda starts at 0 so a
// freshly initialized encoder leaves ghost features untouched.
struct EncoderParams {
  LinearLayer l1, l2, l3;
  BatchNorm bn1, bn2, bn3;
  std::vector<double> w_proj;  // d x kGeomDim, row-major
  double lambda = 0.0;
  std::size_t d = 768;

  // Throws NumericError when any entry is non-finite, ShapeError when
  // a buffer does not match its declared dimensions.
  void validate() const;
};

// Uniform init scaled by 1/sqrt(fan_in) for weights and biases,
// gamma = 1, beta = 0, running stats (0, 1), lambda = 0.
EncoderParams init_params(std::size_t d, std::uint64_t seed);

// Pooled geometric feature of one candidate cloud.
struct GeomFeature {
  std::vector<double> values;  // kGeomDim
  bool empty_flag = false;
};

// Ghost-node baseline feature / fused output, length d.
struct FeatureVector {
  std::vector<double> values;
};

struct LayerCache {
  std::vector<double> x;     // n x in, layer input
  std::vector<double> xhat;  // n x out, normalized pre-scale
  std::vector<double> act;   // n x out, post ReLU
  std::vector<double> mean;  // out, stats used for normalization
  std::vector<double> var;   // out
};

struct ForwardCache {
  std::size_t n = 0;
  Mode mode = Mode::Eval;
  bool empty_flag = false;
  LayerCache c1, c2, c3;
  std::vector<std::size_t> argmax;  // kGeomDim, winner per channel
  std::vector<double> pooled;       // kGeomDim
};

// Runs the shared MLP per point and max-pools each channel over the
// points. Train mode normalizes with batch statistics over the cloud's
// points and folds them into the running stats (momentum 0.1); Eval
// mode uses the stored running stats and never mutates params. The
// empty flag of the cloud is carried onto the feature. Throws
// ShapeError on an empty cloud or when expect_n is given and does not
// match, NumericError when the result is non-finite.
GeomFeature encode(const geometry::PointCloud& pc, EncoderParams& params,
                   Mode mode, ForwardCache* cache = nullptr,
                   std::optional<std::size_t> expect_n = std::nullopt);

// W_proj * g, length d.
std::vector<double> project_feature(const GeomFeature& g,
                                    const EncoderParams& params);

// v_ghost + lambda * (W_proj * g). When g carries the empty flag the
// input is returned unchanged. lambda == 0 short-circuits to an exact
// copy of v_ghost. Throws ShapeError on dimension mismatch.
FeatureVector fuse(const FeatureVector& v_ghost, const GeomFeature& g,
                   const EncoderParams& params);

struct LinearGrads {
  std::vector<double> w;
  std::vector<double> b;
};

struct BnGrads {
  std::vector<double> gamma;
  std::vector<double> beta;
};

struct EncoderGrads {
  LinearGrads l1, l2, l3;
  BnGrads bn1, bn2, bn3;
  std::vector<double> w_proj;
  double lambda = 0.0;
  std::vector<double> points;   // n x 3, gradient wrt the input cloud
  std::vector<double> v_ghost;  // d
};

// Gradients of a scalar loss through fuse(encode(...)) given
// d loss / d fused (length d). Max-pool routes gradient to the stored
// winners. With a Train cache batch norm backpropagates through the
// batch statistics; with an Eval cache the stored running stats are
// constants, which is the frozen-normalizer form used to fine-tune
// against the deployed forward pass.
EncoderGrads backward(const ForwardCache& cache,
                      const std::vector<double>& grad_out,
                      const EncoderParams& params);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t t = 0;
  std::vector<double> m;  // first moments, canonical tensor order
  std::vector<double> v;  // second moments
};

// One bias-corrected Adam step over every trainable tensor (MLP
// weights and biases, gamma, beta, W_proj, lambda). Running stats are
// buffers, not parameters, and are not touched. Throws NumericError on
// non-finite gradients.
void opt_step(EncoderParams& params, const EncoderGrads& grads,
              AdamState& state, const AdamConfig& cfg = {});

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central finite differences of the squared-norm loss
// L = sum_k fuse(v_ghost, encode(pc))_k^2 against the analytic
// gradients, probing every entry of every trainable tensor. Relative
// error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckReport grad_check(const geometry::PointCloud& pc,
                           const EncoderParams& params,
                           const std::vector<double>& v_ghost,
                           double step = 1e-5, double tol = 1e-4);

// Little-endian binary checkpoint: magic "LCGP", u32 version, u32 d,
// then every tensor (running stats included) as u32 name length, name
// bytes, u32 rank, u32 dims, f32 data.
void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);

// --- layer primitives (exposed for unit fixtures) ---------------------

// y[p][o] = sum_i x[p][i] * w[o][i] + b[o]
void linear_forward(const std::vector<double>& x, std::size_t n,
                    const LinearLayer& layer, std::vector<double>& y);

// In-place normalization with the stored running stats.
void batchnorm_eval(std::vector<double>& y, std::size_t n,
                    const BatchNorm& bn);

void relu_inplace(std::vector<double>& y);

// Channel-wise max over points; winners (first index attaining the
// max) are written to argmax when non-null.
void maxpool_points(const std::vector<double>& act, std::size_t n,
                    std::size_t ch, std::vector<double>& out,
                    std::vector<std::size_t>* argmax);

}  // namespace lcg::encoder
