#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "maat/error.hpp"
#include "maat/ops.hpp"
#include "maat/random.hpp"
#include "maat/tape.hpp"

// Anomaly sparse attention: a dense Gaussian prior association over temporal
// distance and a series association normalized only over a local window.
namespace maat {

struct AttentionConfig {
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t block_size = 20;
  double dropout = 0.0;
  // Series-association logits are divided by sqrt(d_model); false uses
  // sqrt(d_model / n_heads) instead.
  bool scale_by_d_model = true;

  std::size_t d_head() const { return d_model / n_heads; }

  double logit_scale() const {
    return 1.0 / std::sqrt(static_cast<double>(scale_by_d_model ? d_model : d_head()));
  }

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw ParameterError("attention: d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
                           std::to_string(n_heads) + ")");
    }
    if (block_size == 0) throw ParameterError("attention: block_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("attention: dropout must lie in [0, 1)");
  }
};

// Per-layer association maps, batch-major: prior and series are
// [B, heads, N, N], sigma is [B, heads, N].
struct AttentionMaps {
  Tensor prior;
  Tensor series;
  Tensor sigma;
};

// Inclusive-exclusive column range of the local window of row i.
struct WindowRange {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t size() const { return hi - lo; }
  bool contains(std::size_t j) const { return j >= lo && j < hi; }
};

// Ω_i = { j : |j - i| <= block_size / 2 } ∩ [0, N). The comparison uses the
// real half-width; for integer offsets that is floor(block_size / 2).
inline WindowRange local_window_range(std::size_t i, std::size_t n, std::size_t block_size) {
  if (i >= n) throw ContractError("local_window: position " + std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
  const std::size_t radius = block_size / 2;
  return {i >= radius ? i - radius : 0, std::min(n, i + radius + 1)};
}

inline std::vector<std::size_t> local_window(std::size_t i, std::size_t n, std::size_t block_size) {
  const WindowRange r = local_window_range(i, n, block_size);
  std::vector<std::size_t> out;
  for (std::size_t j = r.lo; j < r.hi; ++j) out.push_back(j);
  return out;
}

// --------------------------------------------------------- prior association

namespace detail {

inline void check_sigma(const Tensor& sigma) {
  if (sigma.rank() == 0) throw DimensionError("prior_association: sigma needs a position axis");
  for (double s : sigma.data()) {
    if (!(s > 0.0)) throw ParameterError("prior_association: sigma must be strictly positive");
  }
}

}  // namespace detail

// P[..., i, j] = exp(-(i-j)^2 / (2 sigma_i^2)) / sum_k exp(-(i-k)^2 / (2 sigma_i^2))
inline Tensor prior_association_value(const Tensor& sigma) {
  detail::check_sigma(sigma);
  const std::size_t n = sigma.shape().back();
  Shape shape = sigma.shape();
  shape.push_back(n);
  Tensor p(shape, 0.0);
  for (std::size_t r = 0; r < sigma.size(); ++r) {
    const std::size_t i = r % n;
    const double s = sigma[r];
    double* row = &p[r * n];
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dist = static_cast<double>(i) - static_cast<double>(j);
      row[j] = std::exp(-dist * dist / (2.0 * s * s));
      z += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= z;
  }
  return p;
}

inline Var prior_association(const Var& sigma) {
  Tensor p = prior_association_value(sigma.value());
  const std::size_t n = sigma.value().shape().back();
  return sigma.tape().record(
      std::move(p), {sigma},
      [n](const Tape& t, const Tape::Node& node, const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& sig = t.value(node.inputs[0]);
        const Tensor& pv = node.value;
        for (std::size_t r = 0; r < sig.size(); ++r) {
          const std::size_t i = r % n;
          const double s = sig[r];
          const double* prow = &pv[r * n];
          const double* grow = &g[r * n];
          // dP_ij/ds = P_ij (d_ij^2 - E_P[d^2]) / s^3
          double mean_d2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dist = static_cast<double>(i) - static_cast<double>(j);
            mean_d2 += prow[j] * dist * dist;
          }
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dist = static_cast<double>(i) - static_cast<double>(j);
            acc += grow[j] * prow[j] * (dist * dist - mean_d2);
          }
          (*gin[0])[r] += acc / (s * s * s);
        }
      });
}

// ------------------------------------------------- sparse series association

// S[..., i, j] = softmax_{j in Ω_i}(scale * Q_i . K_j), exactly 0 outside Ω_i.
// Only the |Ω_i| in-window logits are ever computed. Q, K: [..., N, d_head].
inline Var sparse_series_association(const Var& q, const Var& k, std::size_t block_size, double scale) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  if (qv.shape() != kv.shape() || qv.rank() < 2) {
    throw DimensionError("sparse_series_association: Q " + to_string(qv.shape()) + " vs K " + to_string(kv.shape()));
  }
  if (block_size == 0) throw ParameterError("sparse_series_association: block_size must be >= 1");
  const std::size_t n = qv.shape()[qv.rank() - 2];
  const std::size_t dh = qv.shape().back();
  const std::size_t groups = n ? qv.size() / (n * dh) : 0;
  Shape shape(qv.shape().begin(), qv.shape().end() - 1);
  shape.push_back(n);
  Tensor s(shape, 0.0);

  for (std::size_t z = 0; z < groups; ++z) {
    const double* qz = &qv[z * n * dh];
    const double* kz = &kv[z * n * dh];
    double* sz = &s[z * n * n];
    for (std::size_t i = 0; i < n; ++i) {
      const WindowRange w = local_window_range(i, n, block_size);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = w.lo; j < w.hi; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += qz[i * dh + c] * kz[j * dh + c];
        sz[i * n + j] = scale * dot;
        mx = std::max(mx, sz[i * n + j]);
      }
      double total = 0.0;
      for (std::size_t j = w.lo; j < w.hi; ++j) {
        sz[i * n + j] = std::exp(sz[i * n + j] - mx);
        total += sz[i * n + j];
      }
      for (std::size_t j = w.lo; j < w.hi; ++j) sz[i * n + j] /= total;
    }
  }

  return q.tape().record(
      std::move(s), {q, k},
      [=](const Tape& t, const Tape::Node& node, const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& q_ = t.value(node.inputs[0]);
        const Tensor& k_ = t.value(node.inputs[1]);
        const Tensor& s_ = node.value;
        for (std::size_t z = 0; z < groups; ++z) {
          for (std::size_t i = 0; i < n; ++i) {
            const WindowRange w = local_window_range(i, n, block_size);
            const double* srow = &s_[(z * n + i) * n];
            const double* grow = &g[(z * n + i) * n];
            double dot = 0.0;
            for (std::size_t j = w.lo; j < w.hi; ++j) dot += grow[j] * srow[j];
            for (std::size_t j = w.lo; j < w.hi; ++j) {
              const double ga = scale * srow[j] * (grow[j] - dot);
              if (ga == 0.0) continue;
              if (gin[0])
                for (std::size_t c = 0; c < dh; ++c) (*gin[0])[(z * n + i) * dh + c] += ga * k_[(z * n + j) * dh + c];
              if (gin[1])
                for (std::size_t c = 0; c < dh; ++c) (*gin[1])[(z * n + j) * dh + c] += ga * q_[(z * n + i) * dh + c];
            }
          }
        }
      });
}

// ------------------------------------------------------------ full layer

// Handles to one layer's attention parameters on the current tape.
struct AttentionWeights {
  Var wq, bq, wk, bk, wv, bv;  // d_model -> d_model
  Var wo, bo;                  // d_model -> d_model
  Var wsigma, bsigma;          // d_model -> n_heads
  Var norm_gamma, norm_beta;   // residual LayerNorm
};

struct AttentionOutput {
  Var out;     // [B, N, d_model]
  Var series;  // [B, H, N, N]
  Var prior;   // [B, H, N, N]
  Var sigma;   // [B, H, N]

  AttentionMaps maps() const { return {prior.value(), series.value(), sigma.value()}; }
};

inline constexpr double kSigmaFloor = 1e-4;

// [B, N, H*dh] -> [B, H, N, dh]
inline Var split_heads(const Var& x, std::size_t heads) {
  const Shape& s = x.shape();
  return ops::permute(ops::reshape(x, {s[0], s[1], heads, s[2] / heads}), {0, 2, 1, 3});
}

// [B, H, N, dh] -> [B, N, H*dh]
inline Var merge_heads(const Var& x) {
  const Shape& s = x.shape();
  return ops::reshape(ops::permute(x, {0, 2, 1, 3}), {s[0], s[2], s[1] * s[3]});
}

// Multi-head anomaly attention with residual connection and LayerNorm.
// `rng` drives dropout and may be null when training is false.
inline AttentionOutput anomaly_sparse_attention(const Var& x, const AttentionConfig& cfg, const AttentionWeights& w,
                                                bool training = false, Rng* rng = nullptr) {
  cfg.validate();
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[2] != cfg.d_model || xs[1] == 0) {
    throw DimensionError("anomaly_sparse_attention: expected [B, N, " + std::to_string(cfg.d_model) + "], got " +
                         to_string(xs));
  }
  const std::size_t heads = cfg.n_heads;
  const Var q = split_heads(ops::linear(x, w.wq, w.bq), heads);
  const Var k = split_heads(ops::linear(x, w.wk, w.bk), heads);
  const Var v = split_heads(ops::linear(x, w.wv, w.bv), heads);

  const Var series = sparse_series_association(q, k, cfg.block_size, cfg.logit_scale());

  const Var sigma_bnh = ops::add_scalar(ops::softplus(ops::linear(x, w.wsigma, w.bsigma)), kSigmaFloor);
  const Var sigma = ops::permute(sigma_bnh, {0, 2, 1});
  const Var prior = prior_association(sigma);

  Var context = ops::bmm(series, v);
  if (training && cfg.dropout > 0.0) {
    if (!rng) throw ContractError("anomaly_sparse_attention: dropout needs an rng");
    context = ops::dropout(context, cfg.dropout, *rng);
  }
  const Var projected = ops::linear(merge_heads(context), w.wo, w.bo);
  const Var out = ops::layer_norm(ops::add(x, projected), w.norm_gamma, w.norm_beta);
  return {out, series, prior, sigma};
}

}  // namespace maat
