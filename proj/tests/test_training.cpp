#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"

using namespace maat;
using maat::testing::random_tensor;
using maat::testing::TempDir;
using maat::testing::toy_model;

namespace {

bool all_zero(const Tensor& t) {
  for (double v : t.data())
    if (v != 0.0) return false;
  return true;
}

SeriesDataset sine_series(std::size_t length, std::uint64_t seed) {
  SynthSpec spec;
  spec.length = length;
  spec.seed = seed;
  spec.noise = 0.02;
  spec.min_period = 8.0;
  spec.max_period = 32.0;
  return normalize(synth_generate(spec));
}

TrainConfig quick_train() {
  TrainConfig t;
  t.lr = 1e-3;
  t.epochs = 1;
  t.batch_size = 4;
  t.seed = 3;
  return t;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameter) {
  Tensor p = Tensor::vector({0.3, -2.0});
  Tensor m({2}, 0.0), v({2}, 0.0);
  adam_update(p, Tensor({2}, 0.0), m, v, 1, {});
  EXPECT_EQ(p, Tensor::vector({0.3, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::vector({1.0, 1.0, 1.0});
  Tensor m({3}, 0.0), v({3}, 0.0);
  AdamHyper h;
  h.lr = 0.01;
  h.eps = 0.0;
  adam_update(p, Tensor::vector({5.0, -0.001, 42.0}), m, v, 1, h);
  EXPECT_NEAR(p[0], 0.99, 1e-14);
  EXPECT_NEAR(p[1], 1.01, 1e-14);
  EXPECT_NEAR(p[2], 0.99, 1e-14);
}

TEST(Adam, ThreeStepHandTrace) {
  const double g[3] = {0.5, -1.0, 2.0};
  const double b1 = 0.9, b2 = 0.999, lr = 0.1, eps = 1e-8;
  double x = 1.0, mm = 0.0, vv = 0.0;
  Tensor p = Tensor::vector({1.0});
  Tensor m({1}, 0.0), v({1}, 0.0);
  for (int t = 1; t <= 3; ++t) {
    mm = b1 * mm + (1 - b1) * g[t - 1];
    vv = b2 * vv + (1 - b2) * g[t - 1] * g[t - 1];
    x -= lr * (mm / (1 - std::pow(b1, t))) / (std::sqrt(vv / (1 - std::pow(b2, t))) + eps);
    adam_update(p, Tensor::vector({g[t - 1]}), m, v, static_cast<std::uint64_t>(t), {lr, b1, b2, eps, 0.0});
    EXPECT_NEAR(p[0], x, 1e-12);
  }
}

TEST(Adam, WeightDecayActsAsL2) {
  Tensor a = Tensor::vector({2.0}), b = Tensor::vector({2.0});
  Tensor ma({1}, 0.0), va({1}, 0.0), mb({1}, 0.0), vb({1}, 0.0);
  adam_update(a, Tensor::vector({0.1}), ma, va, 1, {0.01, 0.9, 0.999, 1e-8, 0.5});
  adam_update(b, Tensor::vector({0.1 + 0.5 * 2.0}), mb, vb, 1, {0.01, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(a, b);
}

TEST(Adam, StepCounterAndShapeChecks) {
  ParamStore ps;
  ps.add("w", Tensor({2}, 1.0));
  OptimizerState st = OptimizerState::like(ps);
  adam_step(ps, {Tensor({2}, 1.0)}, st, {});
  adam_step(ps, {Tensor({2}, 1.0)}, st, {});
  EXPECT_EQ(st.step, 2u);
  EXPECT_THROW(adam_step(ps, {}, st, {}), ContractError);
  Tensor p({2}), m({2}), v({2});
  EXPECT_THROW(adam_update(p, Tensor({3}), m, v, 1, {}), DimensionError);
  EXPECT_THROW(adam_update(p, Tensor({2}), m, v, 0, {}), ContractError);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.epochs = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.lambda = -1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.lr_decay = 1.5;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(PhaseLosses, StopGradientRoutesEachTermToOneSide) {
  const ModelConfig c = toy_model();
  const ModelParams mp = init_params(c);
  Rng rng(1);
  Tape t;
  const BoundParams p(t, mp.tensors, true);
  const Var x = t.constant(random_tensor(rng, {2, c.window, c.input_dim}));
  const PhaseLosses pl = phase_losses(x, c, p, 3.0);

  const Gradients gmin = t.backward(pl.dis_min);
  const Gradients gmax = t.backward(pl.dis_max);
  for (std::size_t l = 0; l < c.e_layers; ++l) {
    EXPECT_FALSE(all_zero(gmin.of(pl.forward.prior[l])));
    EXPECT_TRUE(all_zero(gmax.of(pl.forward.prior[l])));
    EXPECT_FALSE(all_zero(gmax.of(pl.forward.series[l])));
  }
  // Earlier series maps still shape later priors through the hidden state;
  // the last one reaches the minimize term only through its frozen copy.
  EXPECT_TRUE(all_zero(gmin.of(pl.forward.series.back())));
  // The sigma projection only feeds the prior, so the maximize term leaves it alone.
  const std::vector<Tensor> pg = p.gradients(gmax);
  EXPECT_TRUE(all_zero(pg[mp.tensors.position("layer0.attn.sigma.w")]));
  EXPECT_FALSE(all_zero(p.gradients(gmin)[mp.tensors.position("layer0.attn.sigma.w")]));
  // ...and the query projection only feeds the series, so the minimize term leaves it alone.
  EXPECT_TRUE(all_zero(p.gradients(gmin)[mp.tensors.position("layer1.attn.q.w")]));
}

TEST(PhaseLosses, LossesCombineAsSigned) {
  const ModelConfig c = toy_model();
  const ModelParams mp = init_params(c);
  Rng rng(2);
  Tape t;
  const BoundParams p(t, mp.tensors, true);
  const Var x = t.constant(random_tensor(rng, {1, c.window, c.input_dim}));
  const PhaseLosses pl = phase_losses(x, c, p, 2.5);
  const double r = pl.recon.value().item(), d = pl.dis_min.value().item();
  EXPECT_EQ(d, pl.dis_max.value().item());
  EXPECT_NEAR(pl.loss_min.value().item(), r + 2.5 * d, 1e-14);
  EXPECT_NEAR(pl.loss_max.value().item(), r - 2.5 * d, 1e-14);
}

TEST(MinimaxStep, ZeroLambdaGivesIdenticalPhases) {
  const ModelConfig c = toy_model();
  ModelParams mp = init_params(c);
  OptimizerState opt = OptimizerState::like(mp.tensors);
  TrainConfig tc;
  tc.lambda = 0.0;
  Rng rng(3);
  const StepResult r = minimax_step(random_tensor(rng, {2, c.window, c.input_dim}), mp, opt, tc, 1e-3);
  ASSERT_EQ(r.grad_min.size(), r.grad_max.size());
  for (std::size_t i = 0; i < r.grad_min.size(); ++i) EXPECT_EQ(r.grad_min[i], r.grad_max[i]) << mp.tensors.name(i);
  EXPECT_EQ(r.minimize.assdis_term, 0.0);
  EXPECT_EQ(opt.step, 2u);
}

TEST(MinimaxStep, RecordsCarryBothPhases) {
  const ModelConfig c = toy_model();
  ModelParams mp = init_params(c);
  OptimizerState opt = OptimizerState::like(mp.tensors);
  Rng rng(4);
  const StepResult r = minimax_step(random_tensor(rng, {2, c.window, c.input_dim}), mp, opt, TrainConfig{}, 1e-3);
  EXPECT_EQ(r.minimize.phase, Phase::Minimize);
  EXPECT_EQ(r.maximize.phase, Phase::Maximize);
  EXPECT_EQ(r.minimize.recon_loss, r.maximize.recon_loss);
  EXPECT_GT(r.minimize.assdis_term, 0.0);
  EXPECT_EQ(r.maximize.assdis_term, -r.minimize.assdis_term);
}

TEST(MinimaxStep, ReconstructionLossFallsOnAFixedBatch) {
  ModelConfig c = toy_model();
  c.input_dim = 1;
  ModelParams mp = init_params(c);
  OptimizerState opt = OptimizerState::like(mp.tensors);
  const Tensor batch = windows(sine_series(64, 1), c.window).windows;
  TrainConfig tc;
  std::vector<double> losses;
  for (int i = 0; i < 50; ++i) losses.push_back(minimax_step(batch, mp, opt, tc, 1e-3).minimize.recon_loss);
  const double first = std::accumulate(losses.begin(), losses.begin() + 10, 0.0) / 10;
  const double last = std::accumulate(losses.end() - 10, losses.end(), 0.0) / 10;
  EXPECT_LT(last, first);
}

TEST(Fit, RecordCountAndOrder) {
  ModelConfig c = toy_model();
  c.input_dim = 1;
  TrainConfig tc = quick_train();
  tc.batch_size = 1;
  const FitResult r = fit(sine_series(2 * c.window + 5, 2), tc, c);
  ASSERT_EQ(r.history.size(), 4u);
  EXPECT_EQ(r.history[0].phase, Phase::Minimize);
  EXPECT_EQ(r.history[1].phase, Phase::Maximize);
  EXPECT_EQ(r.history[2].batch, 1u);
  EXPECT_EQ(batch_losses(r.history).size(), 2u);
}

TEST(Fit, DeterministicUnderSeed) {
  ModelConfig c = toy_model();
  c.input_dim = 1;
  c.dropout = 0.1;
  TrainConfig tc = quick_train();
  tc.epochs = 2;
  const SeriesDataset ds = sine_series(160, 3);
  const FitResult a = fit(ds, tc, c);
  const FitResult b = fit(ds, tc, c);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.params.tensors, b.params.tensors);
  tc.seed = 4;
  EXPECT_FALSE(fit(ds, tc, c).history == a.history);
}

TEST(Fit, SineReconstructionImproves) {
  ModelConfig c = toy_model();
  c.input_dim = 1;
  TrainConfig tc = quick_train();
  tc.epochs = 5;
  tc.batch_size = 8;
  const FitResult r = fit(sine_series(1600, 5), tc, c);
  const std::vector<double> l = batch_losses(r.history);
  EXPECT_LT(l.back(), 0.25 * l.front());
}

TEST(Fit, EmptyAndMismatchedData) {
  ModelConfig c = toy_model();
  c.input_dim = 1;
  EXPECT_THROW(fit(sine_series(c.window - 1, 1), quick_train(), c), EmptyDatasetError);
  c.input_dim = 2;
  EXPECT_THROW(fit(sine_series(64, 1), quick_train(), c), DimensionError);
}

TEST(Fit, DivergenceKeepsLastStableParameters) {
  ModelConfig c = toy_model();
  c.input_dim = 1;
  TrainConfig tc = quick_train();
  tc.lr = 1e200;
  tc.epochs = 3;
  try {
    fit(sine_series(160, 6), tc, c);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    for (std::size_t i = 0; i < e.last_stable.tensors.size(); ++i) EXPECT_TRUE(e.last_stable.tensors.at(i).all_finite());
    EXPECT_NE(std::string(e.what()).find("diverged at epoch"), std::string::npos);
  }
}

TEST(LossCsv, RoundTrip) {
  TempDir dir("loss");
  const std::vector<LossRecord> h{{0, 0, Phase::Minimize, 0.123456789012345678, 0.5},
                                  {0, 0, Phase::Maximize, 0.123456789012345678, -0.5},
                                  {1, 3, Phase::Minimize, 1e-300, 2.0 / 3.0}};
  write_loss_csv(h, dir.file("l.csv"));
  EXPECT_EQ(read_loss_csv(dir.file("l.csv")), h);
}

TEST(LossCsv, RejectsBadFiles) {
  TempDir dir("loss");
  maat::testing::write_text(dir.file("h.csv"), "a,b\n");
  EXPECT_THROW(read_loss_csv(dir.file("h.csv")), FormatError);
  maat::testing::write_text(dir.file("p.csv"), "epoch,batch,phase,recon_loss,assdis_term\n0,0,sideways,1,1\n");
  EXPECT_THROW(read_loss_csv(dir.file("p.csv")), ParseError);
  EXPECT_THROW(read_loss_csv(dir.file("none.csv")), IoError);
}
