#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maat/error.hpp"

namespace maat {

struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  std::size_t length() const { return end - start; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Sorted, non-overlapping half-open intervals.
class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(std::vector<Interval> items) : items_(std::move(items)) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (items_[i].end <= items_[i].start) throw ContractError("interval set: empty or reversed interval");
      if (i > 0 && items_[i].start < items_[i - 1].end) {
        throw ContractError("interval set: intervals must be sorted and disjoint");
      }
    }
  }

  const std::vector<Interval>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Interval& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  friend bool operator==(const IntervalSet&, const IntervalSet&) = default;

 private:
  std::vector<Interval> items_;
};

inline IntervalSet to_intervals(std::span<const std::uint8_t> labels) {
  std::vector<Interval> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (!labels[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < labels.size() && labels[j]) ++j;
    out.push_back({i, j});
    i = j;
  }
  return IntervalSet(std::move(out));
}

namespace detail {

inline void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ContractError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

inline double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace detail

// ---------------------------------------------------------------- point-wise

struct PointScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

inline PointScores point_prf(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  detail::check_aligned(pred.size(), truth.size(), "point_prf");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool t = truth[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
    tn += !p && !t;
  }
  PointScores s;
  s.precision = detail::ratio_or_zero(double(tp), double(tp + fp));
  s.recall = detail::ratio_or_zero(double(tp), double(tp + fn));
  s.f1 = detail::ratio_or_zero(2.0 * s.precision * s.recall, s.precision + s.recall);
  s.accuracy = detail::ratio_or_zero(double(tp + tn), double(pred.size()));
  return s;
}

// ---------------------------------------------------------------- affiliation

struct AffiliationScores {
  std::optional<double> precision;  // absent without predicted points
  std::optional<double> recall;     // absent without true points
};

// Indicator sums: share of predicted points lying inside true anomalies, and
// share of true points that were predicted.
inline AffiliationScores affiliation(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  detail::check_aligned(pred.size(), truth.size(), "affiliation");
  std::size_t both = 0, np = 0, nt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    np += pred[i] != 0;
    nt += truth[i] != 0;
    both += pred[i] != 0 && truth[i] != 0;
  }
  AffiliationScores s;
  if (np) s.precision = double(both) / double(np);
  if (nt) s.recall = double(both) / double(nt);
  return s;
}

// --------------------------------------------------------------------- range

inline constexpr double kDefaultRangeTau = 0.5;

// Fraction of a covered by b.
inline double overlap(const Interval& a, const Interval& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  return hi > lo ? double(hi - lo) / double(a.length()) : 0.0;
}

struct RangeScores {
  std::optional<double> recall;     // over true ranges
  std::optional<double> precision;  // over predicted ranges
};

namespace detail {

inline std::optional<double> covered_share(const IntervalSet& subject, const IntervalSet& other, double tau) {
  if (subject.empty()) return std::nullopt;
  std::size_t hit = 0;
  for (const Interval& a : subject) {
    double best = 0.0;
    for (const Interval& b : other) best = std::max(best, overlap(a, b));
    hit += best >= tau;
  }
  return double(hit) / double(subject.size());
}

}  // namespace detail

inline RangeScores range_metrics(const IntervalSet& truth, const IntervalSet& pred, double tau = kDefaultRangeTau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("range_metrics: tau must lie in (0, 1]");
  return {detail::covered_share(truth, pred, tau), detail::covered_share(pred, truth, tau)};
}

// -------------------------------------------------------------------- volume

struct CurvePoint {
  double threshold;
  double fpr;
  double tpr;  // also recall
  double precision;
};

struct VolumeScores {
  std::optional<double> roc;
  std::optional<double> pr;
  std::vector<CurvePoint> curve;  // one point per distinct score, descending threshold
};

namespace detail {

inline double trapezoid(const std::vector<std::pair<double, double>>& pts) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  }
  return area;
}

}  // namespace detail

// Sweeps pred = score >= t over every distinct score, counting volume as
// points. The ROC curve starts at (0, 0); the PR curve starts at recall 0
// with the precision of the highest threshold.
inline VolumeScores volume_metrics(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  detail::check_aligned(scores.size(), truth.size(), "volume_metrics");
  VolumeScores out;
  if (scores.empty()) return out;
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t pos = 0;
  for (std::uint8_t t : truth) pos += t != 0;
  const std::size_t neg = truth.size() - pos;

  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double thr = scores[order[k]];
    while (k < order.size() && scores[order[k]] == thr) {
      (truth[order[k]] ? tp : fp) += 1;
      ++k;
    }
    out.curve.push_back({thr, detail::ratio_or_zero(double(fp), double(neg)),
                         detail::ratio_or_zero(double(tp), double(pos)), double(tp) / double(tp + fp)});
  }

  if (pos > 0 && neg > 0) {
    std::vector<std::pair<double, double>> roc{{0.0, 0.0}};
    for (const auto& c : out.curve) roc.emplace_back(c.fpr, c.tpr);
    out.roc = detail::trapezoid(roc);
  }
  if (pos > 0) {
    std::vector<std::pair<double, double>> pr{{0.0, out.curve.front().precision}};
    for (const auto& c : out.curve) pr.emplace_back(c.tpr, c.precision);
    out.pr = detail::trapezoid(pr);
  }
  return out;
}

// -------------------------------------------------------------------- bundle

struct MetricBundle {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> aff_p;
  std::optional<double> aff_r;
  std::optional<double> r_a_r;
  std::optional<double> r_a_p;
  std::optional<double> v_roc;
  std::optional<double> v_pr;
};

// Volume metrics need scores; pass an empty span to leave them absent.
inline MetricBundle evaluate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                             std::span<const double> scores = {}, double tau = kDefaultRangeTau) {
  detail::check_aligned(pred.size(), truth.size(), "evaluate");
  MetricBundle m;
  const PointScores ps = point_prf(pred, truth);
  m.accuracy = ps.accuracy;
  m.precision = ps.precision;
  m.recall = ps.recall;
  m.f1 = ps.f1;
  const AffiliationScores af = affiliation(pred, truth);
  m.aff_p = af.precision;
  m.aff_r = af.recall;
  const RangeScores rs = range_metrics(to_intervals(truth), to_intervals(pred), tau);
  m.r_a_r = rs.recall;
  m.r_a_p = rs.precision;
  if (!scores.empty()) {
    detail::check_aligned(scores.size(), truth.size(), "evaluate");
    const VolumeScores vs = volume_metrics(scores, truth);
    m.v_roc = vs.roc;
    m.v_pr = vs.pr;
  }
  return m;
}

}  // namespace maat
