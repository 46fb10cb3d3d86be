#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maat/attention.hpp"
#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/model.hpp"
#include "maat/ops.hpp"
#include "maat/tape.hpp"

namespace maat {

inline constexpr double kKlFloor = 1e-12;
inline constexpr double kStochasticTol = 1e-6;

// ----------------------------------------------------- association discrepancy

namespace detail {

inline void check_row_stochastic(const Tensor& m, const char* what) {
  if (m.rank() < 2) throw DimensionError(std::string(what) + ": expected a matrix stack");
  const std::size_t n = m.shape().back();
  for (std::size_t r = 0; r < m.size() / n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m[r * n + j];
      if (!(v >= 0.0)) throw ContractError(std::string(what) + ": negative or non-finite entry");
      s += v;
    }
    if (std::abs(s - 1.0) > kStochasticTol) {
      throw ContractError(std::string(what) + ": row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }
}

inline double kl_term(double p, double q) { return p * (std::log(p + kKlFloor) - std::log(q + kKlFloor)); }

}  // namespace detail

// Per-row KL(p||s) + KL(s||p) with the log floor; reduces the last axis.
inline Tensor symmetric_kl_rows_value(const Tensor& p, const Tensor& s) {
  if (p.shape() != s.shape() || p.rank() < 1) {
    throw DimensionError("symmetric_kl_rows: " + to_string(p.shape()) + " vs " + to_string(s.shape()));
  }
  const std::size_t n = p.shape().back();
  Tensor out(Shape(p.shape().begin(), p.shape().end() - 1), 0.0);
  for (std::size_t r = 0; r < out.size(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = p[r * n + j];
      const double b = s[r * n + j];
      acc += detail::kl_term(a, b) + detail::kl_term(b, a);
    }
    out[r] = acc;
  }
  return out;
}

inline Var symmetric_kl_rows(const Var& p, const Var& s) {
  Tensor out = symmetric_kl_rows_value(p.value(), s.value());
  const std::size_t n = p.value().shape().back();
  return p.tape().record(
      std::move(out), {p, s},
      [n](const Tape& t, const Tape::Node& node, const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& p_ = t.value(node.inputs[0]);
        const Tensor& s_ = t.value(node.inputs[1]);
        // d/da [a log(a+e) - a log(b+e) + b log(b+e) - b log(a+e)]
        //   = log(a+e) + a/(a+e) - log(b+e) - b/(a+e)
        for (std::size_t r = 0; r < g.size(); ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            const double a = p_[r * n + j];
            const double b = s_[r * n + j];
            const double la = std::log(a + kKlFloor);
            const double lb = std::log(b + kKlFloor);
            if (gin[0]) (*gin[0])[r * n + j] += g[r] * (la - lb + (a - b) / (a + kKlFloor));
            if (gin[1]) (*gin[1])[r * n + j] += g[r] * (lb - la + (b - a) / (b + kKlFloor));
          }
        }
      });
}

// Per-position discrepancy averaged over layers and heads. Maps are
// [heads, N, N] (result [N]) or [B, heads, N, N] (result [B, N]).
inline Tensor association_discrepancy(const std::vector<Tensor>& prior_list, const std::vector<Tensor>& series_list) {
  if (prior_list.size() != series_list.size() || prior_list.empty()) {
    throw ContractError("association_discrepancy: need equally many (>= 1) prior and series maps");
  }
  const Shape& shape = prior_list.front().shape();
  if (shape.size() != 3 && shape.size() != 4) throw DimensionError("association_discrepancy: maps must be rank 3 or 4");
  const std::size_t n = shape.back();
  const std::size_t heads = shape[shape.size() - 3];
  const std::size_t nb = shape.size() == 4 ? shape[0] : 1;
  Tensor out(shape.size() == 4 ? Shape{nb, n} : Shape{n}, 0.0);
  for (std::size_t l = 0; l < prior_list.size(); ++l) {
    if (prior_list[l].shape() != shape || series_list[l].shape() != shape) {
      throw DimensionError("association_discrepancy: layer map shapes differ");
    }
    detail::check_row_stochastic(prior_list[l], "prior association");
    detail::check_row_stochastic(series_list[l], "series association");
    const Tensor kl = symmetric_kl_rows_value(prior_list[l], series_list[l]);  // [B, H, N]
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) out[b * n + i] += kl[(b * heads + h) * n + i];
  }
  const double denom = static_cast<double>(prior_list.size() * heads);
  for (double& v : out.data()) v /= denom;
  return out;
}

inline Tensor association_discrepancy(const std::vector<AttentionMaps>& maps) {
  std::vector<Tensor> prior, series;
  for (const auto& m : maps) {
    prior.push_back(m.prior);
    series.push_back(m.series);
  }
  return association_discrepancy(prior, series);
}

// Scalar training term: mean over layers, batch, heads and positions.
inline Var association_discrepancy_loss(const std::vector<Var>& prior, const std::vector<Var>& series) {
  if (prior.size() != series.size() || prior.empty()) throw ContractError("association_discrepancy_loss: layer mismatch");
  Var total = ops::mean(symmetric_kl_rows(prior[0], series[0]));
  for (std::size_t l = 1; l < prior.size(); ++l) total = ops::add(total, ops::mean(symmetric_kl_rows(prior[l], series[l])));
  return ops::scale(total, 1.0 / static_cast<double>(prior.size()));
}

// ------------------------------------------------------------- anomaly score

struct ScoreVector {
  std::vector<double> scores;
  std::vector<std::size_t> window_starts;
  std::size_t window = 0;
  std::optional<double> threshold;

  std::size_t size() const { return scores.size(); }
};

// score_i = softmax(-assdis)_i * ||x_i - recon_i||^2, the softmax taken over
// the positions of each window. x, recon: [W, d] or [B, W, d]; assdis: [W]
// or [B, W].
inline std::vector<double> anomaly_score(const Tensor& x, const Tensor& recon, const Tensor& assdis) {
  if (x.shape() != recon.shape() || x.rank() < 2) {
    throw DimensionError("anomaly_score: x " + to_string(x.shape()) + " vs reconstruction " + to_string(recon.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t w = x.shape()[x.rank() - 2];
  const std::size_t nb = x.size() / (w * d);
  if (assdis.size() != nb * w) throw DimensionError("anomaly_score: discrepancy length does not match positions");
  Tensor neg(Shape{nb, w});
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -assdis[i];
  const Tensor weights = ops::softmax_rows_value(neg);
  std::vector<double> out(nb * w);
  for (std::size_t p = 0; p < nb * w; ++p) {
    double err = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double e = x[p * d + c] - recon[p * d + c];
      err += e * e;
    }
    out[p] = weights[p] * err;
  }
  return out;
}

// Window-by-window scoring of a (normalized) series; the partial tail window
// is not scored.
inline ScoreVector score_series(const SeriesDataset& ds, const ModelParams& params, std::size_t batch_size = 32) {
  const ModelConfig& cfg = params.config;
  if (ds.channels() != cfg.input_dim) {
    throw DimensionError("score: model expects d=" + std::to_string(cfg.input_dim) + ", data has d=" +
                         std::to_string(ds.channels()));
  }
  const WindowBatch wb = windows(ds, cfg.window, true);
  ScoreVector sv;
  sv.window = cfg.window;
  sv.window_starts = wb.starts;
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t b0 = 0; b0 < wb.count(); b0 += batch_size) {
    const std::size_t b1 = std::min(wb.count(), b0 + batch_size);
    const Tensor xb = batch_slice(wb, b0, b1);
    const ForwardOutput fo = forward(xb, params);
    const Tensor ad = association_discrepancy(fo.maps);
    const std::vector<double> s = anomaly_score(xb, fo.recon, ad);
    sv.scores.insert(sv.scores.end(), s.begin(), s.end());
  }
  return sv;
}

// ---------------------------------------------------------------- threshold

// Nearest-rank threshold from the top: with n pooled scores, tau is the k-th
// largest score, k = ceil(n * ratio / 100) (at least 1), so that the top
// ratio% of the pool scores >= tau up to ties.
inline double threshold_from_ratio(std::span<const double> pool, double anomaly_ratio) {
  if (pool.empty()) throw ContractError("threshold_from_ratio: empty score pool");
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 100.0)) {
    throw ContractError("threshold_from_ratio: anomaly ratio must lie in (0, 100)");
  }
  const double n = static_cast<double>(pool.size());
  const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(n * anomaly_ratio / 100.0 - 1e-9)));
  std::vector<double> sorted(pool.begin(), pool.end());
  const auto kth = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() - k);
  std::nth_element(sorted.begin(), kth, sorted.end());
  return *kth;
}

// Marks every true segment holding at least one predicted point as fully
// predicted.
inline Labels point_adjust(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) throw ContractError("point_adjust: length mismatch");
  Labels out(pred.begin(), pred.end());
  std::size_t i = 0;
  while (i < truth.size()) {
    if (!truth[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool hit = false;
    for (; j < truth.size() && truth[j]; ++j)
      if (pred[j]) hit = true;
    if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(j), 1);
    i = j;
  }
  return out;
}

inline Labels detect(std::span<const double> scores, double threshold, bool adjust = false,
                     const std::optional<std::span<const std::uint8_t>>& truth = std::nullopt) {
  if (!std::isfinite(threshold)) throw ContractError("detect: threshold must be finite");
  if (adjust && !truth) throw ContractError("detect: point adjustment needs ground-truth labels");
  Labels pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold ? 1 : 0;
  if (adjust) return point_adjust(pred, *truth);
  return pred;
}

// ----------------------------------------------------------- loss differential

// delta_i = log(L_AT_i) - log(L_MAAT_i); positive where the second run has the
// lower loss.
inline std::vector<double> loss_differential(std::span<const double> baseline, std::span<const double> model) {
  if (baseline.size() != model.size()) throw ContractError("loss_differential: histories differ in length");
  std::vector<double> out(baseline.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(baseline[i] > 0.0) || !(model[i] > 0.0)) {
      throw DomainError("loss_differential: loss at batch " + std::to_string(i) + " is not positive");
    }
    out[i] = std::log(baseline[i]) - std::log(model[i]);
  }
  return out;
}

}  // namespace maat
