#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"

using namespace maat;
using maat::testing::bits;
using maat::testing::random_stochastic;
using maat::testing::random_tensor;
using maat::testing::toy_model;

namespace {

// Plain double-loop symmetric KL with the same floor.
double sym_kl(const std::vector<double>& p, const std::vector<double>& s) {
  double a = 0.0, b = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    a += p[j] * std::log((p[j] + 1e-12) / (s[j] + 1e-12));
    b += s[j] * std::log((s[j] + 1e-12) / (p[j] + 1e-12));
  }
  return a + b;
}

Tensor heads_of(std::initializer_list<std::vector<double>> rows) {
  const std::size_t n = rows.begin()->size();
  Tensor t({1, rows.size(), n});
  std::size_t i = 0;
  for (const auto& r : rows)
    for (double v : r) t[i++] = v;
  return t;
}

}  // namespace

TEST(AssDis, IdenticalMapsGiveZero) {
  Rng rng(1);
  const Tensor p = random_stochastic(rng, 6, 6).reshaped({1, 6, 6});
  const Tensor d = association_discrepancy({p, p}, {p, p});
  for (double v : d.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(AssDis, UniformVersusOneHot) {
  const Tensor prior = heads_of({{0.5, 0.5}, {0.5, 0.5}});
  const Tensor series = heads_of({{1.0, 0.0}, {0.0, 1.0}});
  const Tensor d = association_discrepancy({prior}, {series});
  const double expect = sym_kl({0.5, 0.5}, {1.0, 0.0});
  EXPECT_NEAR(d[0], expect, 1e-12);
  EXPECT_NEAR(d[1], expect, 1e-12);
  EXPECT_GT(d[0], 10.0);
}

TEST(AssDis, SymmetricAndMatchesLoopOracle) {
  Rng rng(2);
  std::vector<Tensor> pl, sl;
  for (int l = 0; l < 3; ++l) {
    pl.push_back(random_stochastic(rng, 2 * 2 * 5, 5).reshaped({2, 2, 5, 5}));
    sl.push_back(random_stochastic(rng, 2 * 2 * 5, 5).reshaped({2, 2, 5, 5}));
  }
  const Tensor d = association_discrepancy(pl, sl);
  EXPECT_EQ(d.shape(), (Shape{2, 5}));
  EXPECT_EQ(d, association_discrepancy(sl, pl));
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 5; ++i) {
      double acc = 0.0;
      for (int l = 0; l < 3; ++l)
        for (std::size_t h = 0; h < 2; ++h) {
          std::vector<double> p(5), s(5);
          for (std::size_t j = 0; j < 5; ++j) {
            p[j] = pl[l].at({b, h, i, j});
            s[j] = sl[l].at({b, h, i, j});
          }
          acc += sym_kl(p, s);
        }
      EXPECT_NEAR(d.at({b, i}), acc / 6.0, 1e-12);
    }
  }
}

TEST(AssDis, RejectsNonStochasticRows) {
  const Tensor good = heads_of({{0.5, 0.5}, {0.5, 0.5}});
  const Tensor bad = heads_of({{0.5, 0.6}, {0.5, 0.5}});
  EXPECT_THROW(association_discrepancy({good}, {bad}), ContractError);
  EXPECT_THROW(association_discrepancy({good}, {}), ContractError);
}

TEST(AssDis, LossGradient) {
  Rng rng(3);
  auto logits = [&](std::size_t r) { return random_tensor(rng, {r, 4}); };
  EXPECT_LT(grad_check(
                [](Tape&, std::span<const Var> v) {
                  return association_discrepancy_loss({ops::softmax_rows(v[0]), ops::softmax_rows(v[2])},
                                                      {ops::softmax_rows(v[1]), ops::softmax_rows(v[3])});
                },
                {logits(6), logits(6), logits(6), logits(6)}),
            1e-6);
}

TEST(AssDis, LossIsMeanOfPerPositionValues) {
  Rng rng(4);
  const Tensor p = random_stochastic(rng, 2 * 3 * 4, 4).reshaped({2, 3, 4, 4});
  const Tensor s = random_stochastic(rng, 2 * 3 * 4, 4).reshaped({2, 3, 4, 4});
  Tape t;
  const double loss = association_discrepancy_loss({t.constant(p)}, {t.constant(s)}).value().item();
  const Tensor d = association_discrepancy({p}, {s});
  EXPECT_NEAR(loss, std::accumulate(d.data().begin(), d.data().end(), 0.0) / d.size(), 1e-14);
}

TEST(AnomalyScore, ConstantDiscrepancyGivesErrorOverN) {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {5, 2});
  const Tensor r = random_tensor(rng, {5, 2});
  const std::vector<double> s = anomaly_score(x, r, Tensor({5}, 0.7));
  for (std::size_t i = 0; i < 5; ++i) {
    const double e = std::pow(x[2 * i] - r[2 * i], 2) + std::pow(x[2 * i + 1] - r[2 * i + 1], 2);
    EXPECT_NEAR(s[i], e / 5.0, 1e-15);
  }
}

TEST(AnomalyScore, PerfectReconstructionScoresZero) {
  Rng rng(6);
  const Tensor x = random_tensor(rng, {2, 4, 3});
  for (double v : anomaly_score(x, x, random_tensor(rng, {2, 4}))) EXPECT_EQ(v, 0.0);
}

TEST(AnomalyScore, ThreePointHandCase) {
  const Tensor x = Tensor::matrix({{1}, {2}, {3}});
  const Tensor r = Tensor::matrix({{0}, {2}, {1}});
  const std::vector<double> s = anomaly_score(x, r, Tensor::vector({0.0, std::log(2.0), std::log(4.0)}));
  // softmax(-ad) = (1, 1/2, 1/4) / 1.75
  EXPECT_NEAR(s[0], 1.0 / 1.75, 1e-15);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_NEAR(s[2], 4.0 * 0.25 / 1.75, 1e-15);
  EXPECT_THROW(anomaly_score(x, Tensor({3, 2}), Tensor({3})), DimensionError);
  EXPECT_THROW(anomaly_score(x, r, Tensor({4})), DimensionError);
}

TEST(ScoreSeries, CoversWholeWindowsOnlyAndIgnoresBatchSize) {
  ModelConfig c = toy_model();
  c.input_dim = 2;
  const ModelParams mp = init_params(c);
  SynthSpec spec;
  spec.length = 5 * c.window + 3;
  spec.channels = 2;
  const SeriesDataset ds = normalize(synth_generate(spec));
  const ScoreVector a = score_series(ds, mp, 2);
  EXPECT_EQ(a.size(), 5 * c.window);
  EXPECT_EQ(a.window_starts.size(), 5u);
  EXPECT_EQ(a.scores, score_series(ds, mp, 7).scores);
  for (double v : a.scores) EXPECT_GE(v, 0.0);
}

TEST(Threshold, NearestRankFromTop) {
  std::vector<double> pool(200);
  std::iota(pool.begin(), pool.end(), 1.0);
  const double tau = threshold_from_ratio(pool, 1.0);
  EXPECT_EQ(tau, 199.0);
  const Labels pred = detect(pool, tau);
  EXPECT_EQ(std::accumulate(pred.begin(), pred.end(), 0), 2);
  EXPECT_EQ(threshold_from_ratio(pool, 0.1), 200.0);
  EXPECT_EQ(threshold_from_ratio(pool, 50.0), 101.0);
}

TEST(Threshold, AllEqualScoresFlagEverything) {
  const std::vector<double> pool(50, 3.25);
  const double tau = threshold_from_ratio(pool, 1.0);
  const Labels pred = detect(pool, tau);
  EXPECT_EQ(std::accumulate(pred.begin(), pred.end(), 0), 50);
}

TEST(Threshold, BadInputs) {
  EXPECT_THROW(threshold_from_ratio({}, 1.0), ContractError);
  const std::vector<double> pool{1, 2};
  EXPECT_THROW(threshold_from_ratio(pool, 0.0), ContractError);
  EXPECT_THROW(threshold_from_ratio(pool, 100.0), ContractError);
}

TEST(Detect, ThresholdIsInclusive) {
  const std::vector<double> s{0.1, 0.5, 0.49, 0.9};
  EXPECT_EQ(detect(s, 0.5), bits({0, 1, 0, 1}));
  EXPECT_THROW(detect(s, std::nan("")), ContractError);
  EXPECT_THROW(detect(s, 0.5, true), ContractError);
}

TEST(Detect, PointAdjustFillsHitSegments) {
  const std::vector<double> s{0, 0, 1, 0, 0, 0, 0, 1};
  const Labels truth = bits({0, 1, 1, 1, 0, 1, 1, 0});
  EXPECT_EQ(detect(s, 0.5, true, std::span<const std::uint8_t>(truth)), bits({0, 1, 1, 1, 0, 0, 0, 1}));
  EXPECT_EQ(point_adjust(bits({1, 0, 0}), bits({0, 0, 0})), bits({1, 0, 0}));
  EXPECT_THROW(point_adjust(bits({1}), bits({1, 0})), ContractError);
}

TEST(LossDifferential, Examples) {
  const double e = std::exp(1.0);
  const std::vector<double> base{e * e, 1.0, 0.5};
  const std::vector<double> model{e, 1.0, 1.0};
  const std::vector<double> d = loss_differential(base, model);
  EXPECT_NEAR(d[0], 1.0, 1e-15);
  EXPECT_EQ(d[1], 0.0);
  EXPECT_NEAR(d[2], -std::log(2.0), 1e-15);
}

TEST(LossDifferential, BadInputs) {
  const std::vector<double> a{1.0, 2.0}, b{1.0}, z{1.0, 0.0};
  EXPECT_THROW(loss_differential(a, b), ContractError);
  EXPECT_THROW(loss_differential(a, z), DomainError);
  EXPECT_THROW(loss_differential(z, a), DomainError);
}
