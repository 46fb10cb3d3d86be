#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "maat/metrics.hpp"
#include "maat/random.hpp"
#include "maat/tensor.hpp"

namespace maat::testing {

inline Tensor rand_uniform(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Dense softmax(q k^T * scale) over [G, N, dh] stacks, by plain loops.
inline Tensor dense_softmax_oracle(const Tensor& q, const Tensor& k, double scale) {
  const std::size_t n = q.shape()[q.rank() - 2];
  const std::size_t dh = q.shape().back();
  const std::size_t groups = q.size() / (n * dh);
  Shape shape(q.shape().begin(), q.shape().end() - 1);
  shape.push_back(n);
  Tensor out(shape);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t e = 0; e < dh; ++e) dot += q[(g * n + i) * dh + e] * k[(g * n + j) * dh + e];
        logits[j] = dot * scale;
        mx = std::max(mx, logits[j]);
      }
      double z = 0.0;
      for (double& l : logits) z += l = std::exp(l - mx);
      for (std::size_t j = 0; j < n; ++j) out[(g * n + i) * n + j] = logits[j] / z;
    }
  }
  return out;
}

struct ScanInputs {
  Tensor u, delta, a, b, c, d;
};

inline ScanInputs random_scan(Rng& rng, std::size_t nb, std::size_t len, std::size_t di, std::size_t ds) {
  return {rand_uniform(rng, {nb, len, di}),         rand_uniform(rng, {nb, len, di}, 0.01, 1.0),
          rand_uniform(rng, {di, ds}, -2.0, -0.05), rand_uniform(rng, {nb, len, ds}),
          rand_uniform(rng, {nb, len, ds}),         rand_uniform(rng, {di})};
}

// Plain per-step recurrence.
inline Tensor naive_scan(const ScanInputs& s) {
  const std::size_t nb = s.u.shape()[0], len = s.u.shape()[1], di = s.u.shape()[2], ds = s.a.shape()[1];
  Tensor y(s.u.shape(), 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t d = 0; d < di; ++d) {
      std::vector<double> h(ds, 0.0);
      for (std::size_t t = 0; t < len; ++t) {
        const double dt = s.delta.at({b, t, d});
        const double u = s.u.at({b, t, d});
        double out = 0.0;
        for (std::size_t n = 0; n < ds; ++n) {
          h[n] = std::exp(dt * s.a.at({d, n})) * h[n] + dt * s.b.at({b, t, n}) * u;
          out += s.c.at({b, t, n}) * h[n];
        }
        y.at({b, t, d}) = out + s.d[d] * u;
      }
    }
  }
  return y;
}

// Hand-worked range metric cases: overlap is the share of the first interval
// covered by the second, and a range counts once its best overlap reaches tau.
struct RangeCase {
  const char* name;
  std::vector<Interval> truth;
  std::vector<Interval> pred;
  double tau;
  std::optional<double> r_a_r;
  std::optional<double> r_a_p;
};

inline const std::vector<RangeCase>& range_cases() {
  static const std::vector<RangeCase> cases{
      {"identical", {{0, 10}}, {{0, 10}}, 0.5, 1.0, 1.0},
      {"half covered meets tau", {{0, 10}}, {{0, 5}}, 0.5, 1.0, 1.0},
      {"tail point only", {{0, 10}}, {{9, 10}}, 0.5, 0.0, 1.0},
      {"forty percent", {{0, 10}}, {{0, 4}}, 0.5, 0.0, 1.0},
      {"one of two found", {{0, 4}, {10, 14}}, {{2, 4}}, 0.5, 0.5, 1.0},
      {"shifted half", {{0, 10}}, {{5, 15}}, 0.5, 1.0, 1.0},
      {"shifted half strict tau", {{0, 10}}, {{5, 15}}, 0.6, 0.0, 0.0},
      {"adjacent pieces stay separate", {{0, 10}}, {{0, 3}, {3, 6}}, 0.5, 0.0, 1.0},
      {"one wide prediction", {{0, 2}, {5, 7}}, {{0, 7}}, 1.0, 1.0, 0.0},
      {"no true ranges", {}, {{1, 3}}, 0.5, std::nullopt, 0.0},
      {"no predictions", {{1, 3}}, {}, 0.5, 0.0, std::nullopt},
      {"mixed", {{0, 4}, {6, 8}, {10, 20}}, {{1, 4}, {6, 7}, {15, 25}}, 0.75, 1.0 / 3.0, 2.0 / 3.0},
  };
  return cases;
}

// Point and indicator metrics from bit masks of length n.
struct MaskOracle {
  double precision, recall, f1, accuracy;
  std::optional<double> aff_p, aff_r;
};

inline MaskOracle mask_oracle(std::uint32_t pred, std::uint32_t truth, unsigned n) {
  const std::uint32_t all = n == 32 ? ~0u : ((1u << n) - 1);
  const int tp = std::popcount(pred & truth);
  const int fp = std::popcount(pred & ~truth & all);
  const int fn = std::popcount(~pred & truth & all);
  const int tn = std::popcount(~pred & ~truth & all);
  MaskOracle o{};
  o.precision = tp + fp ? double(tp) / (tp + fp) : 0.0;
  o.recall = tp + fn ? double(tp) / (tp + fn) : 0.0;
  o.f1 = o.precision + o.recall > 0 ? 2 * o.precision * o.recall / (o.precision + o.recall) : 0.0;
  o.accuracy = double(tp + tn) / n;
  if (pred) o.aff_p = double(tp) / std::popcount(pred);
  if (truth) o.aff_r = double(tp) / std::popcount(truth);
  return o;
}

inline std::vector<std::uint8_t> mask_bits(std::uint32_t m, unsigned n) {
  std::vector<std::uint8_t> v(n);
  for (unsigned i = 0; i < n; ++i) v[i] = (m >> i) & 1u;
  return v;
}

// Rank-sum form of the ROC area (ties count half).
inline std::optional<double> rank_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& t) {
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (t[i] ? pos : neg) += 1;
  if (!pos || !neg) return std::nullopt;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (t[i] && !t[j]) wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
  return wins / double(pos * neg);
}

// Recomputes every threshold's counts from scratch and integrates the PR curve.
inline std::optional<double> enumerated_pr(const std::vector<double>& s, const std::vector<std::uint8_t>& t) {
  std::map<double, int, std::greater<>> thresholds;
  for (double v : s) thresholds[v] = 0;
  std::size_t pos = 0;
  for (auto b : t) pos += b;
  if (!pos) return std::nullopt;
  std::vector<std::pair<double, double>> pts;
  for (const auto& [thr, unused] : thresholds) {
    std::size_t tp = 0, flagged = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= thr) {
        ++flagged;
        tp += t[i];
      }
    pts.emplace_back(double(tp) / double(pos), double(tp) / double(flagged));
  }
  double area = pts.front().first * pts.front().second;  // from recall 0 at the first precision
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2;
  return area;
}

}  // namespace maat::testing
