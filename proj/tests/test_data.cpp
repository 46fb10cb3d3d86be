#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"

using namespace maat;
using maat::testing::TempDir;
using maat::testing::write_text;

TEST(LoadCsv, ReadsFeaturesAndLabels) {
  TempDir dir("csv");
  write_text(dir.file("a.csv"), "f1,f2,label\n1.5,2,0\n-3,4e-1,1\n5,6,0\n");
  const SeriesDataset ds = load_csv(dir.file("a.csv"), true, "label");
  EXPECT_EQ(ds.length(), 3u);
  EXPECT_EQ(ds.channels(), 2u);
  ASSERT_TRUE(ds.labels);
  EXPECT_EQ(*ds.labels, (Labels{0, 1, 0}));
  EXPECT_EQ(ds.values.at({1, 0}), -3.0);
  EXPECT_EQ(ds.values.at({1, 1}), 0.4);
}

TEST(LoadCsv, LabelColumnMayBeAnywhere) {
  TempDir dir("csv");
  write_text(dir.file("a.csv"), "label,x\n1,7\n0,8\n");
  const SeriesDataset ds = load_csv(dir.file("a.csv"), true, "label");
  EXPECT_EQ(ds.channels(), 1u);
  EXPECT_EQ(*ds.labels, (Labels{1, 0}));
  EXPECT_EQ(ds.values.at({1, 0}), 8.0);
}

TEST(LoadCsv, HeaderOnlyIsEmptyDataset) {
  TempDir dir("csv");
  write_text(dir.file("h.csv"), "a,b\n");
  EXPECT_THROW(load_csv(dir.file("h.csv"), true), EmptyDatasetError);
  write_text(dir.file("e.csv"), "");
  EXPECT_THROW(load_csv(dir.file("e.csv"), false), EmptyDatasetError);
}

TEST(LoadCsv, BadCellNamesRowAndColumn) {
  TempDir dir("csv");
  write_text(dir.file("b.csv"), "a,b\n1,2\n3,x\n");
  try {
    load_csv(dir.file("b.csv"), true);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos);
  }
}

TEST(LoadCsv, RaggedRowsAndBadLabels) {
  TempDir dir("csv");
  write_text(dir.file("r.csv"), "1,2\n3\n");
  EXPECT_THROW(load_csv(dir.file("r.csv"), false), FormatError);
  write_text(dir.file("l.csv"), "x,label\n1,2\n");
  EXPECT_THROW(load_csv(dir.file("l.csv"), true, "label"), ParseError);
  EXPECT_THROW(load_csv(dir.file("l.csv"), true, "missing"), FormatError);
  EXPECT_THROW(load_csv(dir.file("l.csv"), false, "label"), ContractError);
  EXPECT_THROW(load_csv(dir.file("nope.csv"), true), IoError);
}

TEST(LoadCsv, RoundTripIsBitExact) {
  TempDir dir("csv");
  SynthSpec spec;
  spec.length = 100;
  spec.channels = 3;
  spec.seed = 5;
  spec.injections = {{40, 3, InjectionKind::Spike, 8.0}};
  const SeriesDataset ds = synth_generate(spec);
  save_csv(ds, dir.file("s.csv"));
  const SeriesDataset back = load_csv(dir.file("s.csv"), true, "label");
  EXPECT_EQ(back.values, ds.values);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Normalize, ConstantChannelBecomesZero) {
  SeriesDataset ds;
  ds.values = Tensor::matrix({{3, 0}, {3, 2}});
  const SeriesDataset n = normalize(ds);
  EXPECT_EQ(n.values, Tensor::matrix({{0, -1}, {0, 1}}));
}

TEST(Normalize, TrainStatsOnTestSplit) {
  SeriesDataset train, test;
  train.values = Tensor::matrix({{0}, {2}, {4}});
  test.values = Tensor::matrix({{10}, {12}});
  const SeriesDataset ntrain = normalize(train);
  const SeriesDataset ntest = normalize(test, ntrain.norm_stats);
  const double sd = std::sqrt(8.0 / 3.0);
  EXPECT_NEAR(ntest.values[0], (10 - 2) / sd, 1e-12);
  EXPECT_NEAR(ntest.values[1], (12 - 2) / sd, 1e-12);
  EXPECT_GT(std::abs(ntest.values[0] + ntest.values[1]), 1.0);
}

TEST(Normalize, TrainingMeanIsZeroAndIdempotent) {
  SynthSpec spec;
  spec.length = 500;
  spec.channels = 2;
  spec.seed = 3;
  const SeriesDataset n = normalize(synth_generate(spec));
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0;
    for (std::size_t t = 0; t < 500; ++t) m += n.values[t * 2 + c];
    EXPECT_LT(std::abs(m / 500), 1e-9);
  }
  EXPECT_EQ(normalize(n, n.norm_stats).values, n.values);
}

TEST(Normalize, ChannelMismatch) {
  SeriesDataset ds;
  ds.values = Tensor::matrix({{1, 2}});
  EXPECT_THROW(normalize(ds, NormStats{{0}, {1}}), DimensionError);
}

TEST(Windows, FloorDivisionAndStarts) {
  SeriesDataset ds;
  ds.values = Tensor(Shape{10, 1});
  for (std::size_t i = 0; i < 10; ++i) ds.values[i] = double(i);
  const WindowBatch wb = windows(ds, 4);
  EXPECT_EQ(wb.count(), 2u);
  EXPECT_EQ(wb.starts, (std::vector<std::size_t>{0, 4}));
  EXPECT_EQ(wb.windows.at({1, 3, 0}), 7.0);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(wb.windows[i], double(i));
}

TEST(Windows, TableWindowSizes) {
  for (std::size_t w : {100u, 105u}) {
    SeriesDataset ds;
    ds.values = Tensor(Shape{w, 2});
    EXPECT_EQ(windows(ds, w).count(), 1u);
  }
}

TEST(Windows, TooShortGivesEmptyBatch) {
  SeriesDataset ds;
  ds.values = Tensor(Shape{5, 1});
  EXPECT_EQ(windows(ds, 8).count(), 0u);
  EXPECT_THROW(windows(ds, 0), ContractError);
}

TEST(Windows, KeptTailIsPaddedAndCounted) {
  SeriesDataset ds;
  ds.values = Tensor(Shape{10, 1});
  for (std::size_t i = 0; i < 10; ++i) ds.values[i] = double(i);
  const WindowBatch wb = windows(ds, 4, false);
  EXPECT_EQ(wb.count(), 3u);
  EXPECT_EQ(wb.valid_points, 10u);
  EXPECT_EQ(wb.windows.at({2, 3, 0}), 9.0);
}

TEST(Windows, LabelsFollowWindows) {
  SeriesDataset ds;
  ds.values = Tensor(Shape{6, 1});
  ds.labels = Labels{0, 0, 1, 1, 0, 1};
  const WindowBatch wb = windows(ds, 3);
  ASSERT_TRUE(wb.labels);
  EXPECT_EQ(*wb.labels, Tensor::matrix({{0, 0, 1}, {1, 0, 1}}));
}

TEST(Synth, DeterministicUnderSeed) {
  SynthSpec spec;
  spec.seed = 17;
  spec.channels = 2;
  spec.injections = {{100, 10, InjectionKind::NoiseBurst, 4.0}};
  EXPECT_EQ(synth_generate(spec).values, synth_generate(spec).values);
  SynthSpec other = spec;
  other.seed = 18;
  EXPECT_NE(synth_generate(other).values, synth_generate(spec).values);
}

TEST(Synth, LabelsMarkExactlyTheInjections) {
  SynthSpec spec;
  spec.length = 300;
  spec.injections = {{10, 5, InjectionKind::Spike, 8.0}, {100, 20, InjectionKind::LevelShift, 3.0}};
  const SeriesDataset ds = synth_generate(spec);
  const auto& l = *ds.labels;
  EXPECT_EQ(std::accumulate(l.begin(), l.end(), 0), 25);
  for (std::size_t t = 0; t < 300; ++t) {
    const bool inside = (t >= 10 && t < 15) || (t >= 100 && t < 120);
    EXPECT_EQ(l[t], inside ? 1 : 0);
  }
}

TEST(Synth, SpikePeakLiesInsideInjection) {
  SynthSpec spec;
  spec.length = 1000;
  spec.seed = 2;
  spec.injections = {{600, 5, InjectionKind::Spike, 8.0}};
  const SeriesDataset z = normalize(synth_generate(spec));
  std::size_t arg = 0;
  for (std::size_t t = 0; t < 1000; ++t)
    if (std::abs(z.values[t]) > std::abs(z.values[arg])) arg = t;
  EXPECT_GE(arg, 600u);
  EXPECT_LT(arg, 605u);
}

TEST(Synth, OverlapNamesOffendingInjection) {
  SynthSpec spec;
  spec.injections = {{10, 10, InjectionKind::Spike, 8.0}, {15, 3, InjectionKind::LevelShift, 8.0}};
  try {
    synth_generate(spec);
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_NE(std::string(e.what()).find("injection #2 (level-shift@15+3)"), std::string::npos);
  }
}

TEST(Synth, OutOfRangeInjection) {
  SynthSpec spec;
  spec.length = 50;
  spec.injections = {{45, 10, InjectionKind::Spike, 8.0}};
  EXPECT_THROW(synth_generate(spec), SpecError);
}

TEST(Synth, OriginContinuesTheSignal) {
  SynthSpec a;
  a.noise = 0.0;
  a.length = 200;
  SynthSpec b = a;
  b.origin = 100;
  b.length = 100;
  const SeriesDataset sa = synth_generate(a);
  const SeriesDataset sb = synth_generate(b);
  for (std::size_t t = 0; t < 100; ++t) EXPECT_NEAR(sb.values[t], sa.values[100 + t], 1e-12);
}
