#include "lcg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "lcg/errors.hpp"
#include "lcg/rng.hpp"

namespace lcg::encoder {

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_layer(const LinearLayer& l, const char* name) {
  if (l.w.size() != l.in * l.out || l.b.size() != l.out)
    throw ShapeError(std::string("params: bad buffer size in ") + name);
  if (!all_finite(l.w) || !all_finite(l.b))
    throw NumericError(std::string("params: non-finite values in ") + name);
}

void check_bn(const BatchNorm& bn, const char* name) {
  if (bn.gamma.size() != bn.ch || bn.beta.size() != bn.ch ||
      bn.running_mean.size() != bn.ch || bn.running_var.size() != bn.ch)
    throw ShapeError(std::string("params: bad buffer size in ") + name);
  if (!all_finite(bn.gamma) || !all_finite(bn.beta) ||
      !all_finite(bn.running_mean) || !all_finite(bn.running_var))
    throw NumericError(std::string("params: non-finite values in ") + name);
}

}  // namespace

void EncoderParams::validate() const {
  if (l1.in != 3 || l1.out != 64 || l2.in != 64 || l2.out != 128 ||
      l3.in != 128 || l3.out != kGeomDim)
    throw ShapeError("params: layer dimensions must be 3->64->128->256");
  if (bn1.ch != 64 || bn2.ch != 128 || bn3.ch != kGeomDim)
    throw ShapeError("params: batch norm widths must match layer outputs");
  check_layer(l1, "l1");
  check_layer(l2, "l2");
  check_layer(l3, "l3");
  check_bn(bn1, "bn1");
  check_bn(bn2, "bn2");
  check_bn(bn3, "bn3");
  if (w_proj.size() != d * kGeomDim)
    throw ShapeError("params: w_proj must be d x 256");
  if (!all_finite(w_proj) || !std::isfinite(lambda))
    throw NumericError("params: non-finite values in projection");
}

namespace {

LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng) {
  LinearLayer l;
  l.in = in;
  l.out = out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  l.w.resize(in * out);
  l.b.resize(out);
  for (double& x : l.w) x = rng.uniform(-bound, bound);
  for (double& x : l.b) x = rng.uniform(-bound, bound);
  return l;
}

BatchNorm init_bn(std::size_t ch) {
  BatchNorm bn;
  bn.ch = ch;
  bn.gamma.assign(ch, 1.0);
  bn.beta.assign(ch, 0.0);
  bn.running_mean.assign(ch, 0.0);
  bn.running_var.assign(ch, 1.0);
  return bn;
}

}  // namespace

EncoderParams init_params(std::size_t d, std::uint64_t seed) {
  if (d == 0) throw DomainError("init_params: d must be >= 1");
  Rng rng(seed);
  EncoderParams p;
  p.d = d;
  p.l1 = init_linear(3, 64, rng);
  p.l2 = init_linear(64, 128, rng);
  p.l3 = init_linear(128, kGeomDim, rng);
  p.bn1 = init_bn(64);
  p.bn2 = init_bn(128);
  p.bn3 = init_bn(kGeomDim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(kGeomDim));
  p.w_proj.resize(d * kGeomDim);
  for (double& x : p.w_proj) x = rng.uniform(-bound, bound);
  p.lambda = 0.0;
  return p;
}

void linear_forward(const std::vector<double>& x, std::size_t n,
                    const LinearLayer& layer, std::vector<double>& y) {
  y.resize(n * layer.out);
  for (std::size_t p = 0; p < n; ++p) {
    const double* xr = &x[p * layer.in];
    double* yr = &y[p * layer.out];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* wr = &layer.w[o * layer.in];
      double acc = layer.b[o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
}

void batchnorm_eval(std::vector<double>& y, std::size_t n,
                    const BatchNorm& bn) {
  for (std::size_t c = 0; c < bn.ch; ++c) {
    const double inv = 1.0 / std::sqrt(bn.running_var[c] + bn.eps);
    const double mean = bn.running_mean[c];
    const double g = bn.gamma[c], b = bn.beta[c];
    for (std::size_t p = 0; p < n; ++p) {
      double& v = y[p * bn.ch + c];
      v = g * ((v - mean) * inv) + b;
    }
  }
}

void relu_inplace(std::vector<double>& y) {
  for (double& v : y)
    if (v < 0.0) v = 0.0;
}

void maxpool_points(const std::vector<double>& act, std::size_t n,
                    std::size_t ch, std::vector<double>& out,
                    std::vector<std::size_t>* argmax) {
  out.assign(ch, -std::numeric_limits<double>::infinity());
  if (argmax) argmax->assign(ch, 0);
  for (std::size_t p = 0; p < n; ++p) {
    const double* row = &act[p * ch];
    for (std::size_t c = 0; c < ch; ++c) {
      if (row[c] > out[c]) {
        out[c] = row[c];
        if (argmax) (*argmax)[c] = p;
      }
    }
  }
}

namespace {

// linear -> batch norm -> ReLU for one stage. The cache keeps what the
// backward pass needs: layer input, normalized values, post-ReLU
// activations and the statistics used.
void forward_stage(const std::vector<double>& x, std::size_t n,
                   const LinearLayer& layer, BatchNorm& bn, Mode mode,
                   LayerCache* lc, std::vector<double>& out) {
  std::vector<double> lin;
  linear_forward(x, n, layer, lin);

  std::vector<double> mean(bn.ch), var(bn.ch);
  if (mode == Mode::Train) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t c = 0; c < bn.ch; ++c) {
      double m = 0.0;
      for (std::size_t p = 0; p < n; ++p) m += lin[p * bn.ch + c];
      m *= inv_n;
      double v = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double d = lin[p * bn.ch + c] - m;
        v += d * d;
      }
      v *= inv_n;
      mean[c] = m;
      var[c] = v;
      bn.running_mean[c] = (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * m;
      bn.running_var[c] = (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * v;
    }
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }

  std::vector<double> xhat(n * bn.ch);
  out.resize(n * bn.ch);
  for (std::size_t c = 0; c < bn.ch; ++c) {
    const double inv = 1.0 / std::sqrt(var[c] + bn.eps);
    const double m = mean[c], g = bn.gamma[c], b = bn.beta[c];
    for (std::size_t p = 0; p < n; ++p) {
      const double h = (lin[p * bn.ch + c] - m) * inv;
      xhat[p * bn.ch + c] = h;
      double y = g * h + b;
      out[p * bn.ch + c] = y > 0.0 ? y : 0.0;
    }
  }

  if (lc) {
    lc->x = x;
    lc->xhat = std::move(xhat);
    lc->act = out;
    lc->mean = std::move(mean);
    lc->var = std::move(var);
  }
}

}  // namespace

GeomFeature encode(const geometry::PointCloud& pc, EncoderParams& params,
                   Mode mode, ForwardCache* cache,
                   std::optional<std::size_t> expect_n) {
  const std::size_t n = pc.points.size();
  if (n == 0) throw ShapeError("encode: empty cloud");
  if (expect_n && *expect_n != n)
    throw ShapeError("encode: cloud has " + std::to_string(n) +
                     " points, expected " + std::to_string(*expect_n));

  std::vector<double> x(n * 3);
  for (std::size_t p = 0; p < n; ++p) {
    x[p * 3 + 0] = pc.points[p].x;
    x[p * 3 + 1] = pc.points[p].y;
    x[p * 3 + 2] = pc.points[p].z;
  }

  std::vector<double> a1, a2, a3;
  forward_stage(x, n, params.l1, params.bn1, mode, cache ? &cache->c1 : nullptr, a1);
  forward_stage(a1, n, params.l2, params.bn2, mode, cache ? &cache->c2 : nullptr, a2);
  forward_stage(a2, n, params.l3, params.bn3, mode, cache ? &cache->c3 : nullptr, a3);

  GeomFeature g;
  g.empty_flag = pc.from_empty;
  std::vector<std::size_t> argmax;
  maxpool_points(a3, n, kGeomDim, g.values, &argmax);

  if (!all_finite(g.values)) {
    params.validate();  // classify: bad params raise NumericError here
    throw NumericError("encode: non-finite feature");
  }

  if (cache) {
    cache->n = n;
    cache->mode = mode;
    cache->empty_flag = g.empty_flag;
    cache->argmax = std::move(argmax);
    cache->pooled = g.values;
  }
  return g;
}

std::vector<double> project_feature(const GeomFeature& g,
                                    const EncoderParams& params) {
  if (g.values.size() != kGeomDim)
    throw ShapeError("project_feature: feature must have 256 channels");
  if (params.w_proj.size() != params.d * kGeomDim)
    throw ShapeError("project_feature: w_proj must be d x 256");
  std::vector<double> out(params.d);
  for (std::size_t r = 0; r < params.d; ++r) {
    const double* wr = &params.w_proj[r * kGeomDim];
    double acc = 0.0;
    for (std::size_t k = 0; k < kGeomDim; ++k) acc += wr[k] * g.values[k];
    out[r] = acc;
  }
  return out;
}

FeatureVector fuse(const FeatureVector& v_ghost, const GeomFeature& g,
                   const EncoderParams& params) {
  if (v_ghost.values.size() != params.d)
    throw ShapeError("fuse: ghost feature length does not match d");
  if (g.empty_flag || params.lambda == 0.0) return v_ghost;

  const std::vector<double> proj = project_feature(g, params);
  FeatureVector out;
  out.values.resize(params.d);
  for (std::size_t r = 0; r < params.d; ++r)
    out.values[r] = v_ghost.values[r] + params.lambda * proj[r];
  return out;
}

namespace {

// ReLU then normalization backward for one stage with the stats held
// constant (Eval caches): the normalizer is a fixed affine map, so no
// batch-statistic terms appear.
void stage_backward_frozen(const LayerCache& lc, const BatchNorm& bn,
                           std::size_t n, std::vector<double>& dact,
                           std::vector<double>& dgamma,
                           std::vector<double>& dbeta,
                           std::vector<double>& dlin) {
  dgamma.assign(bn.ch, 0.0);
  dbeta.assign(bn.ch, 0.0);
  dlin.resize(n * bn.ch);
  for (std::size_t c = 0; c < bn.ch; ++c) {
    const double inv = 1.0 / std::sqrt(lc.var[c] + bn.eps);
    const double gamma = bn.gamma[c];
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t idx = p * bn.ch + c;
      const double gy = lc.act[idx] > 0.0 ? dact[idx] : 0.0;
      dgamma[c] += gy * lc.xhat[idx];
      dbeta[c] += gy;
      dlin[idx] = gy * gamma * inv;
    }
  }
}

// ReLU then batch-statistics backward for one stage: turns d loss /
// d act into d loss / d lin plus the gamma/beta gradients.
void stage_backward_bn(const LayerCache& lc, const BatchNorm& bn,
                       std::size_t n, std::vector<double>& dact,
                       std::vector<double>& dgamma, std::vector<double>& dbeta,
                       std::vector<double>& dlin) {
  dgamma.assign(bn.ch, 0.0);
  dbeta.assign(bn.ch, 0.0);
  dlin.resize(n * bn.ch);

  for (std::size_t c = 0; c < bn.ch; ++c) {
    const double inv = 1.0 / std::sqrt(lc.var[c] + bn.eps);
    const double gamma = bn.gamma[c];
    double sgx = 0.0, sgxx = 0.0, dg = 0.0, db = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t idx = p * bn.ch + c;
      const double gy = lc.act[idx] > 0.0 ? dact[idx] : 0.0;
      const double gx = gy * gamma;
      dg += gy * lc.xhat[idx];
      db += gy;
      sgx += gx;
      sgxx += gx * lc.xhat[idx];
    }
    dgamma[c] = dg;
    dbeta[c] = db;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t idx = p * bn.ch + c;
      const double gy = lc.act[idx] > 0.0 ? dact[idx] : 0.0;
      const double gx = gy * gamma;
      dlin[idx] = inv * (gx - sgx * inv_n - lc.xhat[idx] * sgxx * inv_n);
    }
  }
}

void linear_backward(const LayerCache& lc, const LinearLayer& layer,
                     std::size_t n, const std::vector<double>& dlin,
                     LinearGrads& g, std::vector<double>& dx) {
  g.w.assign(layer.in * layer.out, 0.0);
  g.b.assign(layer.out, 0.0);
  dx.assign(n * layer.in, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const double* xr = &lc.x[p * layer.in];
    const double* dyr = &dlin[p * layer.out];
    double* dxr = &dx[p * layer.in];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double dy = dyr[o];
      if (dy == 0.0) continue;
      g.b[o] += dy;
      double* gw = &g.w[o * layer.in];
      const double* wr = &layer.w[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) {
        gw[i] += dy * xr[i];
        dxr[i] += dy * wr[i];
      }
    }
  }
}

}  // namespace

EncoderGrads backward(const ForwardCache& cache,
                      const std::vector<double>& grad_out,
                      const EncoderParams& params) {
  if (grad_out.size() != params.d)
    throw ShapeError("backward: grad_out length does not match d");

  const std::size_t n = cache.n;
  EncoderGrads g;
  g.v_ghost = grad_out;
  g.points.assign(n * 3, 0.0);
  g.w_proj.assign(params.d * kGeomDim, 0.0);
  g.lambda = 0.0;
  g.l1.w.assign(params.l1.in * params.l1.out, 0.0);
  g.l1.b.assign(params.l1.out, 0.0);
  g.l2.w.assign(params.l2.in * params.l2.out, 0.0);
  g.l2.b.assign(params.l2.out, 0.0);
  g.l3.w.assign(params.l3.in * params.l3.out, 0.0);
  g.l3.b.assign(params.l3.out, 0.0);
  g.bn1.gamma.assign(64, 0.0);
  g.bn1.beta.assign(64, 0.0);
  g.bn2.gamma.assign(128, 0.0);
  g.bn2.beta.assign(128, 0.0);
  g.bn3.gamma.assign(kGeomDim, 0.0);
  g.bn3.beta.assign(kGeomDim, 0.0);

  // Fusion was skipped for placeholder clouds, so nothing reaches the
  // encoder side.
  if (cache.empty_flag) return g;

  GeomFeature pooled;
  pooled.values = cache.pooled;
  const std::vector<double> proj = project_feature(pooled, params);

  double dlambda = 0.0;
  std::vector<double> dg(kGeomDim, 0.0);
  for (std::size_t r = 0; r < params.d; ++r) {
    const double go = grad_out[r];
    dlambda += go * proj[r];
    const double s = params.lambda * go;
    const double* wr = &params.w_proj[r * kGeomDim];
    double* gw = &g.w_proj[r * kGeomDim];
    for (std::size_t k = 0; k < kGeomDim; ++k) {
      gw[k] = s * cache.pooled[k];
      dg[k] += s * wr[k];
    }
  }
  g.lambda = dlambda;

  // Max pool: the winning point per channel takes the whole gradient.
  std::vector<double> dact3(n * kGeomDim, 0.0);
  for (std::size_t c = 0; c < kGeomDim; ++c)
    dact3[cache.argmax[c] * kGeomDim + c] = dg[c];

  // Train caches backpropagate through the batch statistics; Eval
  // caches treat the stored stats as constants.
  const auto stage = cache.mode == Mode::Train ? stage_backward_bn
                                               : stage_backward_frozen;

  std::vector<double> dlin, dx;
  stage(cache.c3, params.bn3, n, dact3, g.bn3.gamma, g.bn3.beta, dlin);
  linear_backward(cache.c3, params.l3, n, dlin, g.l3, dx);

  stage(cache.c2, params.bn2, n, dx, g.bn2.gamma, g.bn2.beta, dlin);
  linear_backward(cache.c2, params.l2, n, dlin, g.l2, dx);

  stage(cache.c1, params.bn1, n, dx, g.bn1.gamma, g.bn1.beta, dlin);
  linear_backward(cache.c1, params.l1, n, dlin, g.l1, g.points);

  return g;
}

// --- optimizer --------------------------------------------------------

namespace {

struct TensorRef {
  double* p;
  const double* g;
  std::size_t n;
};

// Canonical flattening order shared by the optimizer state.
std::vector<TensorRef> trainable(EncoderParams& params,
                                 const EncoderGrads& grads) {
  return {
      {params.l1.w.data(), grads.l1.w.data(), params.l1.w.size()},
      {params.l1.b.data(), grads.l1.b.data(), params.l1.b.size()},
      {params.l2.w.data(), grads.l2.w.data(), params.l2.w.size()},
      {params.l2.b.data(), grads.l2.b.data(), params.l2.b.size()},
      {params.l3.w.data(), grads.l3.w.data(), params.l3.w.size()},
      {params.l3.b.data(), grads.l3.b.data(), params.l3.b.size()},
      {params.bn1.gamma.data(), grads.bn1.gamma.data(), params.bn1.gamma.size()},
      {params.bn1.beta.data(), grads.bn1.beta.data(), params.bn1.beta.size()},
      {params.bn2.gamma.data(), grads.bn2.gamma.data(), params.bn2.gamma.size()},
      {params.bn2.beta.data(), grads.bn2.beta.data(), params.bn2.beta.size()},
      {params.bn3.gamma.data(), grads.bn3.gamma.data(), params.bn3.gamma.size()},
      {params.bn3.beta.data(), grads.bn3.beta.data(), params.bn3.beta.size()},
      {params.w_proj.data(), grads.w_proj.data(), params.w_proj.size()},
      {&params.lambda, &grads.lambda, 1},
  };
}

}  // namespace

void opt_step(EncoderParams& params, const EncoderGrads& grads,
              AdamState& state, const AdamConfig& cfg) {
  std::vector<TensorRef> refs = trainable(params, grads);
  std::size_t total = 0;
  for (const TensorRef& r : refs) total += r.n;

  for (const TensorRef& r : refs)
    for (std::size_t i = 0; i < r.n; ++i)
      if (!std::isfinite(r.g[i]))
        throw NumericError("opt_step: non-finite gradient");

  if (state.t == 0) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  } else if (state.m.size() != total) {
    throw ShapeError("opt_step: optimizer state does not match params");
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  std::size_t off = 0;
  for (const TensorRef& r : refs) {
    for (std::size_t i = 0; i < r.n; ++i) {
      double& m = state.m[off + i];
      double& v = state.v[off + i];
      const double grad = r.g[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      r.p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    off += r.n;
  }
}

// --- gradient check ---------------------------------------------------

namespace {

// Train-mode forward of the probe loss. Running stats drift as a side
// effect, which is fine: Train mode normalizes with fresh batch
// statistics, so the loss never reads them.
double loss_value(const geometry::PointCloud& pc, EncoderParams& params,
                  const std::vector<double>& v_ghost) {
  FeatureVector v;
  v.values = v_ghost;
  const GeomFeature g = encode(pc, params, Mode::Train);
  const FeatureVector fused = fuse(v, g, params);
  double loss = 0.0;
  for (double x : fused.values) loss += x * x;
  return loss;
}

struct NamedTensor {
  std::string name;
  std::vector<double>* p;
  const std::vector<double>* g;
};

}  // namespace

GradCheckReport grad_check(const geometry::PointCloud& pc,
                           const EncoderParams& params,
                           const std::vector<double>& v_ghost,
                           double step, double tol) {
  params.validate();
  if (v_ghost.size() != params.d)
    throw ShapeError("grad_check: v_ghost length does not match d");

  EncoderParams work = params;
  FeatureVector v;
  v.values = v_ghost;
  ForwardCache cache;
  const GeomFeature g = encode(pc, work, Mode::Train, &cache);
  const FeatureVector fused = fuse(v, g, work);
  std::vector<double> grad_out(params.d);
  for (std::size_t i = 0; i < params.d; ++i)
    grad_out[i] = 2.0 * fused.values[i];
  const EncoderGrads grads = backward(cache, grad_out, params);

  EncoderParams probe = params;
  std::vector<NamedTensor> tensors = {
      {"l1.w", &probe.l1.w, &grads.l1.w},       {"l1.b", &probe.l1.b, &grads.l1.b},
      {"l2.w", &probe.l2.w, &grads.l2.w},       {"l2.b", &probe.l2.b, &grads.l2.b},
      {"l3.w", &probe.l3.w, &grads.l3.w},       {"l3.b", &probe.l3.b, &grads.l3.b},
      {"bn1.gamma", &probe.bn1.gamma, &grads.bn1.gamma},
      {"bn1.beta", &probe.bn1.beta, &grads.bn1.beta},
      {"bn2.gamma", &probe.bn2.gamma, &grads.bn2.gamma},
      {"bn2.beta", &probe.bn2.beta, &grads.bn2.beta},
      {"bn3.gamma", &probe.bn3.gamma, &grads.bn3.gamma},
      {"bn3.beta", &probe.bn3.beta, &grads.bn3.beta},
      {"w_proj", &probe.w_proj, &grads.w_proj},
  };

  GradCheckReport report;
  for (const NamedTensor& t : tensors) {
    double worst = 0.0;
    for (std::size_t i = 0; i < t.p->size(); ++i) {
      const double keep = (*t.p)[i];
      (*t.p)[i] = keep + step;
      const double up = loss_value(pc, probe, v_ghost);
      (*t.p)[i] = keep - step;
      const double dn = loss_value(pc, probe, v_ghost);
      (*t.p)[i] = keep;
      const double fd = (up - dn) / (2.0 * step);
      const double an = (*t.g)[i];
      const double rel =
          std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-8});
      if (rel > worst) worst = rel;
    }
    report.entries.push_back({t.name, worst});
  }

  {
    const double keep = probe.lambda;
    probe.lambda = keep + step;
    const double up = loss_value(pc, probe, v_ghost);
    probe.lambda = keep - step;
    const double dn = loss_value(pc, probe, v_ghost);
    probe.lambda = keep;
    const double fd = (up - dn) / (2.0 * step);
    const double rel = std::fabs(grads.lambda - fd) /
                       std::max({std::fabs(grads.lambda), std::fabs(fd), 1e-8});
    report.entries.push_back({"lambda", rel});
  }

  for (const GradCheckEntry& e : report.entries)
    report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
  report.pass = report.max_rel_err < tol;
  return report;
}

// --- checkpoint i/o ---------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'L', 'C', 'G', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw ShapeError("checkpoint: truncated file");
  return v;
}

void put_tensor(std::ostream& out, const std::string& name,
                const std::vector<std::uint32_t>& dims,
                const double* data, std::size_t n) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::uint32_t d : dims) put_u32(out, d);
  for (std::size_t i = 0; i < n; ++i) {
    const float f = static_cast<float>(data[i]);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
}

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

}  // namespace

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  params.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open " + path + " for writing");

  out.write(kCkptMagic, 4);
  put_u32(out, kCkptVersion);
  put_u32(out, static_cast<std::uint32_t>(params.d));

  auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  auto put_linear = [&](const std::string& prefix, const LinearLayer& l) {
    put_tensor(out, prefix + ".w", {u32(l.out), u32(l.in)}, l.w.data(), l.w.size());
    put_tensor(out, prefix + ".b", {u32(l.out)}, l.b.data(), l.b.size());
  };
  auto put_bn = [&](const std::string& prefix, const BatchNorm& bn) {
    put_tensor(out, prefix + ".gamma", {u32(bn.ch)}, bn.gamma.data(), bn.ch);
    put_tensor(out, prefix + ".beta", {u32(bn.ch)}, bn.beta.data(), bn.ch);
    put_tensor(out, prefix + ".running_mean", {u32(bn.ch)}, bn.running_mean.data(), bn.ch);
    put_tensor(out, prefix + ".running_var", {u32(bn.ch)}, bn.running_var.data(), bn.ch);
  };
  put_linear("l1", params.l1);
  put_linear("l2", params.l2);
  put_linear("l3", params.l3);
  put_bn("bn1", params.bn1);
  put_bn("bn2", params.bn2);
  put_bn("bn3", params.bn3);
  put_tensor(out, "w_proj", {u32(params.d), u32(kGeomDim)}, params.w_proj.data(),
             params.w_proj.size());
  put_tensor(out, "lambda", {1}, &params.lambda, 1);
  if (!out) throw ConfigError("checkpoint: write failed for " + path);
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw ShapeError("checkpoint: bad magic");
  if (get_u32(in) != kCkptVersion)
    throw ShapeError("checkpoint: unsupported version");
  const std::uint32_t d = get_u32(in);
  if (d == 0) throw ShapeError("checkpoint: d must be >= 1");

  std::map<std::string, RawTensor> raw;
  while (true) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 4);
    if (in.eof()) break;
    if (!in || name_len == 0 || name_len > 256)
      throw ShapeError("checkpoint: bad tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ShapeError("checkpoint: truncated tensor name");
    RawTensor t;
    const std::uint32_t rank = get_u32(in);
    if (rank > 4) throw ShapeError("checkpoint: bad tensor rank");
    std::size_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(get_u32(in));
      count *= t.dims.back();
    }
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      float f = 0.0f;
      in.read(reinterpret_cast<char*>(&f), 4);
      if (!in) throw ShapeError("checkpoint: truncated tensor data");
      t.data[i] = static_cast<double>(f);
    }
    raw[name] = std::move(t);
  }

  auto take = [&](const std::string& name,
                  const std::vector<std::uint32_t>& dims) -> std::vector<double> {
    auto it = raw.find(name);
    if (it == raw.end())
      throw ShapeError("checkpoint: missing tensor " + name);
    if (it->second.dims != dims)
      throw ShapeError("checkpoint: wrong shape for " + name);
    std::vector<double> data = std::move(it->second.data);
    raw.erase(it);
    return data;
  };

  EncoderParams p;
  p.d = d;
  auto load_linear = [&](const std::string& prefix, std::size_t in_dim,
                         std::size_t out_dim, LinearLayer& l) {
    l.in = in_dim;
    l.out = out_dim;
    l.w = take(prefix + ".w", {static_cast<std::uint32_t>(out_dim),
                               static_cast<std::uint32_t>(in_dim)});
    l.b = take(prefix + ".b", {static_cast<std::uint32_t>(out_dim)});
  };
  auto load_bn = [&](const std::string& prefix, std::size_t ch, BatchNorm& bn) {
    bn.ch = ch;
    const std::vector<std::uint32_t> dims = {static_cast<std::uint32_t>(ch)};
    bn.gamma = take(prefix + ".gamma", dims);
    bn.beta = take(prefix + ".beta", dims);
    bn.running_mean = take(prefix + ".running_mean", dims);
    bn.running_var = take(prefix + ".running_var", dims);
  };
  load_linear("l1", 3, 64, p.l1);
  load_linear("l2", 64, 128, p.l2);
  load_linear("l3", 128, kGeomDim, p.l3);
  load_bn("bn1", 64, p.bn1);
  load_bn("bn2", 128, p.bn2);
  load_bn("bn3", kGeomDim, p.bn3);
  p.w_proj = take("w_proj", {d, static_cast<std::uint32_t>(kGeomDim)});
  p.lambda = take("lambda", {1})[0];

  if (!raw.empty())
    throw ShapeError("checkpoint: unexpected tensor " + raw.begin()->first);

  p.validate();
  return p;
}

}  // namespace lcg::encoder
