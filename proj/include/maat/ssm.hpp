#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maat/error.hpp"
#include "maat/ops.hpp"
#include "maat/tape.hpp"

// Selective state-space (Mamba-style) block: input-dependent step size and
// input/output projections over a diagonal, strictly stable state matrix.
namespace maat {

struct SsmConfig {
  std::size_t d_model = 32;
  std::size_t d_state = 16;
  std::size_t d_conv = 4;
  std::size_t expand = 2;

  std::size_t d_inner() const { return expand * d_model; }
  std::size_t dt_rank() const { return (d_model + 15) / 16; }

  void validate() const {
    if (d_model == 0 || d_state == 0 || d_conv == 0 || expand == 0) {
      throw ParameterError("ssm: d_model, d_state, d_conv and expand must all be >= 1");
    }
  }
};

struct Discretized {
  Tensor a_bar;  // [d_inner, d_state]
  Tensor b_bar;  // [d_inner, d_state]
};

// Zero-order hold for the state matrix, first-order (Euler) input map:
// a_bar = exp(delta * A), b_bar = delta * B.
// a: [d_inner, d_state], b: [d_state], delta: [d_inner].
inline Discretized discretize(const Tensor& a, const Tensor& b, const Tensor& delta) {
  if (a.rank() != 2 || b.rank() != 1 || delta.rank() != 1 || a.shape()[0] != delta.size() ||
      a.shape()[1] != b.size()) {
    throw DimensionError("discretize: A " + to_string(a.shape()) + ", B " + to_string(b.shape()) + ", delta " +
                         to_string(delta.shape()));
  }
  for (double dt : delta.data()) {
    if (!(dt > 0.0)) throw ParameterError("discretize: delta must be strictly positive");
  }
  const std::size_t di = a.shape()[0];
  const std::size_t ds = a.shape()[1];
  Discretized out{Tensor(a.shape()), Tensor(a.shape())};
  for (std::size_t d = 0; d < di; ++d) {
    for (std::size_t n = 0; n < ds; ++n) {
      out.a_bar[d * ds + n] = std::exp(delta[d] * a[d * ds + n]);
      out.b_bar[d * ds + n] = delta[d] * b[n];
    }
  }
  return out;
}

// Recurrence over time for every batch row and channel:
//   h_t = exp(delta_t * A) ⊙ h_{t-1} + delta_t * B_t * u_t,   h_0 = 0
//   y_t = C_t . h_t + D * u_t
// u, delta: [Bt, L, di]; a: [di, ds]; b, c: [Bt, L, ds]; d_skip: [di].
inline Var selective_scan(const Var& u, const Var& delta, const Var& a, const Var& b, const Var& c,
                          const Var& d_skip) {
  const Tensor& uv = u.value();
  const Tensor& dv = delta.value();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Tensor& cv = c.value();
  const Tensor& sv = d_skip.value();
  if (uv.rank() != 3 || dv.shape() != uv.shape() || av.rank() != 2 || av.shape()[0] != uv.shape()[2] ||
      bv.rank() != 3 || bv.shape() != cv.shape() || bv.shape()[0] != uv.shape()[0] ||
      bv.shape()[1] != uv.shape()[1] || bv.shape()[2] != av.shape()[1] || sv.size() != av.shape()[0]) {
    throw DimensionError("selective_scan: inconsistent shapes u " + to_string(uv.shape()) + ", A " +
                         to_string(av.shape()) + ", B " + to_string(bv.shape()));
  }
  const std::size_t nb = uv.shape()[0];
  const std::size_t len = uv.shape()[1];
  const std::size_t di = uv.shape()[2];
  const std::size_t ds = av.shape()[1];
  if (len == 0) throw DimensionError("selective_scan: empty sequence");

  // States are kept for the backward sweep.
  auto states = std::make_shared<std::vector<double>>(nb * len * di * ds);
  Tensor y(uv.shape(), 0.0);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t bt = bi * len + t;
      for (std::size_t d = 0; d < di; ++d) {
        const double dt = dv[bt * di + d];
        const double ut = uv[bt * di + d];
        double* h = &(*states)[(bt * di + d) * ds];
        const double* hp = t ? &(*states)[((bt - 1) * di + d) * ds] : nullptr;
        double acc = 0.0;
        for (std::size_t n = 0; n < ds; ++n) {
          const double abar = std::exp(dt * av[d * ds + n]);
          h[n] = (hp ? abar * hp[n] : 0.0) + dt * bv[bt * ds + n] * ut;
          acc += cv[bt * ds + n] * h[n];
        }
        y[bt * di + d] = acc + sv[d] * ut;
      }
    }
  }

  return u.tape().record(
      std::move(y), {u, delta, a, b, c, d_skip},
      [=](const Tape& t_, const Tape::Node& node, const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& u_ = t_.value(node.inputs[0]);
        const Tensor& d_ = t_.value(node.inputs[1]);
        const Tensor& a_ = t_.value(node.inputs[2]);
        const Tensor& b_ = t_.value(node.inputs[3]);
        const Tensor& c_ = t_.value(node.inputs[4]);
        const Tensor& s_ = t_.value(node.inputs[5]);
        Tensor* gu = gin[0];
        Tensor* gdelta = gin[1];
        Tensor* ga = gin[2];
        Tensor* gb = gin[3];
        Tensor* gc = gin[4];
        Tensor* gs = gin[5];
        std::vector<double> gh(di * ds);
        for (std::size_t bi = 0; bi < nb; ++bi) {
          std::fill(gh.begin(), gh.end(), 0.0);
          for (std::size_t t = len; t-- > 0;) {
            const std::size_t bt = bi * len + t;
            for (std::size_t d = 0; d < di; ++d) {
              const double gy = g[bt * di + d];
              const double ut = u_[bt * di + d];
              const double dt = d_[bt * di + d];
              if (gs) (*gs)[d] += gy * ut;
              double gu_acc = gy * s_[d];
              double gd_acc = 0.0;
              const double* h = &(*states)[(bt * di + d) * ds];
              const double* hp = t ? &(*states)[((bt - 1) * di + d) * ds] : nullptr;
              double* ghd = &gh[d * ds];
              for (std::size_t n = 0; n < ds; ++n) {
                if (gc) (*gc)[bt * ds + n] += gy * h[n];
                ghd[n] += gy * c_[bt * ds + n];
                const double an = a_[d * ds + n];
                const double abar = std::exp(dt * an);
                if (hp) {
                  const double g_abar = ghd[n] * hp[n] * abar;
                  gd_acc += g_abar * an;
                  if (ga) (*ga)[d * ds + n] += g_abar * dt;
                }
                const double bn = b_[bt * ds + n];
                gd_acc += ghd[n] * bn * ut;
                if (gb) (*gb)[bt * ds + n] += ghd[n] * dt * ut;
                gu_acc += ghd[n] * dt * bn;
                ghd[n] *= abar;
              }
              if (gu) (*gu)[bt * di + d] += gu_acc;
              if (gdelta) (*gdelta)[bt * di + d] += gd_acc;
            }
          }
        }
      });
}

// Depthwise causal convolution over time: y_t = bias + sum_k w[k] x_{t-K+1+k},
// with zeros before the sequence start. x: [Bt, L, C]; w: [C, K]; bias: [C].
inline Var causal_depthwise_conv(const Var& x, const Var& w, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 3 || wv.rank() != 2 || wv.shape()[0] != xv.shape()[2] || bv.size() != xv.shape()[2]) {
    throw DimensionError("causal_depthwise_conv: x " + to_string(xv.shape()) + ", w " + to_string(wv.shape()));
  }
  const std::size_t nb = xv.shape()[0];
  const std::size_t len = xv.shape()[1];
  const std::size_t ch = xv.shape()[2];
  const std::size_t kw = wv.shape()[1];
  Tensor y(xv.shape());
  for (std::size_t bi = 0; bi < nb; ++bi)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = bv[c];
        for (std::size_t k = 0; k < kw; ++k) {
          const std::size_t lag = kw - 1 - k;
          if (lag > t) continue;
          acc += wv[c * kw + k] * xv[(bi * len + t - lag) * ch + c];
        }
        y[(bi * len + t) * ch + c] = acc;
      }
  return x.tape().record(
      std::move(y), {x, w, bias},
      [=](const Tape& tp, const Tape::Node& node, const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& x_ = tp.value(node.inputs[0]);
        const Tensor& w_ = tp.value(node.inputs[1]);
        for (std::size_t bi = 0; bi < nb; ++bi)
          for (std::size_t t = 0; t < len; ++t)
            for (std::size_t c = 0; c < ch; ++c) {
              const double gy = g[(bi * len + t) * ch + c];
              if (gin[2]) (*gin[2])[c] += gy;
              for (std::size_t k = 0; k < kw; ++k) {
                const std::size_t lag = kw - 1 - k;
                if (lag > t) continue;
                const std::size_t xi = (bi * len + t - lag) * ch + c;
                if (gin[0]) (*gin[0])[xi] += gy * w_[c * kw + k];
                if (gin[1]) (*gin[1])[c * kw + k] += gy * x_[xi];
              }
            }
      });
}

// Handles to one block's SSM parameters on the current tape.
struct SsmWeights {
  Var in_proj;       // [d_model, 2*d_inner], no bias
  Var conv_w;        // [d_inner, d_conv]
  Var conv_b;        // [d_inner]
  Var x_proj;        // [d_inner, dt_rank + 2*d_state], no bias
  Var dt_proj_w;     // [dt_rank, d_inner]
  Var dt_proj_b;     // [d_inner]
  Var a_raw;         // [d_inner, d_state]; A = -softplus(a_raw)
  Var d_skip;        // [d_inner]
  Var out_proj;      // [d_inner, d_model], no bias
};

// Intermediate projections exposed for inspection and oracles.
struct SsmTrace {
  Var u;      // conv + SiLU output feeding the scan, [Bt, L, d_inner]
  Var delta;  // [Bt, L, d_inner]
  Var a;      // [d_inner, d_state]
  Var b;      // [Bt, L, d_state]
  Var c;      // [Bt, L, d_state]
  Var y;      // scan output before gating
};

// input projection -> causal conv + SiLU -> selective scan -> SiLU gate from
// the parallel branch -> output projection.
inline Var mamba_block(const Var& x, const SsmConfig& cfg, const SsmWeights& w, SsmTrace* trace = nullptr) {
  cfg.validate();
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[2] != cfg.d_model || xs[1] == 0) {
    throw DimensionError("mamba_block: expected [B, L, " + std::to_string(cfg.d_model) + "], got " + to_string(xs));
  }
  const std::size_t di = cfg.d_inner();
  const std::size_t ds = cfg.d_state;
  const std::size_t r = cfg.dt_rank();

  const Var xz = ops::matmul(x, w.in_proj);
  const Var x_in = ops::slice_last(xz, 0, di);
  const Var z = ops::slice_last(xz, di, 2 * di);

  const Var u = ops::silu(causal_depthwise_conv(x_in, w.conv_w, w.conv_b));
  const Var proj = ops::matmul(u, w.x_proj);
  const Var dt_low = ops::slice_last(proj, 0, r);
  const Var b = ops::slice_last(proj, r, r + ds);
  const Var c = ops::slice_last(proj, r + ds, r + 2 * ds);
  const Var delta = ops::softplus(ops::linear(dt_low, w.dt_proj_w, w.dt_proj_b));
  const Var a = ops::scale(ops::softplus(w.a_raw), -1.0);

  const Var y = selective_scan(u, delta, a, b, c, w.d_skip);
  if (trace) *trace = {u, delta, a, b, c, y};
  return ops::matmul(ops::mul(y, ops::silu(z)), w.out_proj);
}

}  // namespace maat
