#include "mfcrf/data.hpp"
#include "mfcrf/error.hpp"
#include "mfcrf/metrics.hpp"

#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <random>

namespace {

using namespace mfcrf;

ContingencyTable loop_oracle(const torch::Tensor& pred, const torch::Tensor& obs, double thr) {
  const auto p = pred.to(torch::kFloat64).contiguous().view(-1);
  const auto o = obs.to(torch::kFloat64).contiguous().view(-1);
  auto pa = p.accessor<double, 1>();
  auto oa = o.accessor<double, 1>();
  ContingencyTable t;
  for (std::int64_t i = 0; i < p.size(0); ++i) {
    const bool pe = pa[i] >= thr, oe = oa[i] >= thr;
    if (pe && oe) ++t.tp;
    else if (pe) ++t.fp;
    else if (oe) ++t.fn;
    else ++t.tn;
  }
  return t;
}

TEST(Accumulate, PerfectForecastHasNoErrors) {
  const auto f = torch::rand({4, 16, 16});
  const auto t = accumulate(f, f, 0.5);
  EXPECT_EQ(t.fp, 0);
  EXPECT_EQ(t.fn, 0);
  EXPECT_EQ(t.total(), 4 * 16 * 16);
}

TEST(Accumulate, TotalMiss) {
  const auto t = accumulate(torch::zeros({2, 2}), torch::ones({2, 2}), 0.5);
  EXPECT_EQ(t, (ContingencyTable{0, 0, 4, 0}));
}

TEST(Accumulate, ThresholdIsInclusive) {
  const auto t = accumulate(torch::full({1}, 0.5), torch::full({1}, 0.5), 0.5);
  EXPECT_EQ(t.tp, 1);
}

TEST(Accumulate, MatchesLoopOracleOnRandomFields) {
  torch::manual_seed(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = torch::rand({16, 16}) * 255;
    const auto o = torch::rand({16, 16}) * 255;
    for (double thr : {16.0, 74.0, 133.0, 219.0}) EXPECT_EQ(accumulate(p, o, thr), loop_oracle(p, o, thr));
  }
}

TEST(Accumulate, ShapeMismatchIsRejected) {
  EXPECT_THROW(accumulate(torch::zeros({2, 2}), torch::zeros({2, 3}), 0.5), Error);
}

TEST(Accumulate, AdditiveAcrossBatches) {
  const auto a = torch::rand({3, 8, 8}), b = torch::rand({3, 8, 8});
  const auto c = torch::rand({3, 8, 8}), d = torch::rand({3, 8, 8});
  EXPECT_EQ(accumulate(a, b, 0.3) + accumulate(c, d, 0.3),
            accumulate(torch::cat({a, c}), torch::cat({b, d}), 0.3));
}

TEST(Csi, Examples) {
  EXPECT_DOUBLE_EQ(csi({4, 0, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(csi({1, 1, 2, 0}), 0.25);
  EXPECT_DOUBLE_EQ(csi({0, 0, 0, 7}), 0.0);
}

TEST(Hss, Examples) {
  EXPECT_DOUBLE_EQ(hss({5, 0, 0, 9}), 1.0);
  // 2(0 - 2*3) / ((0+2)(2+0) + (0+3)(3+0)) = -12/13
  EXPECT_NEAR(hss({0, 3, 2, 0}), -12.0 / 13.0, 1e-15);
  EXPECT_DOUBLE_EQ(hss({0, 0, 0, 9}), 0.0);
  EXPECT_DOUBLE_EQ(hss({9, 0, 0, 0}), 0.0);
}

TEST(Hss, BoundedOnRandomTables) {
  std::mt19937 gen(0);
  std::uniform_int_distribution<int> d(0, 50);
  for (int i = 0; i < 2000; ++i) {
    const ContingencyTable t{d(gen), d(gen), d(gen), d(gen)};
    EXPECT_GE(hss(t), -1.0 - 1e-12);
    EXPECT_LE(hss(t), 1.0 + 1e-12);
    EXPECT_GE(csi(t), 0.0);
    EXPECT_LE(csi(t), 1.0);
  }
}

TEST(Scores, InvariantUnderMonotoneRescaling) {
  const auto p = torch::rand({10, 10}, torch::kFloat64), o = torch::rand({10, 10}, torch::kFloat64);
  auto g = [](const torch::Tensor& x) { return torch::exp(3.0 * x) + 2.0; };
  const double thr = 0.4;
  const auto a = accumulate(p, o, thr);
  const auto b = accumulate(g(p), g(o), std::exp(3.0 * thr) + 2.0);
  EXPECT_EQ(a, b);
}

TEST(CsiM, Examples) {
  const auto f = torch::rand({16, 16});
  ThresholdSet all{"t", {0.1, 0.5}};
  EXPECT_DOUBLE_EQ(csi_m(f, f, all), 1.0);
  ThresholdSet none{"t", {0.1, 2.0}};  // no events at 2.0
  EXPECT_DOUBLE_EQ(csi_m(f, f, none), 0.5);
  ThresholdSet single{"t", {0.3}};
  const auto g = torch::rand({16, 16});
  EXPECT_DOUBLE_EQ(csi_m(f, g, single), csi(accumulate(f, g, 0.3)));
  // At 1.5: 2 hits, 3 false alarms -> 0.4.
  const auto obs = torch::tensor({1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 0.0, 0.0, 0.0});
  const auto pred = torch::tensor({1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 2.0});
  EXPECT_NEAR(csi(accumulate(pred, obs, 1.5)), 0.4, 1e-15);
  EXPECT_NEAR(csi_m(pred, obs, ThresholdSet{"t", {0.5, 1.5}}), (csi(accumulate(pred, obs, 0.5)) + 0.4) / 2, 1e-15);
}

TEST(CsiM, EmptyThresholdSetIsRejected) {
  EXPECT_THROW(csi_m(torch::zeros({2}), torch::zeros({2}), ThresholdSet{"t", {}}), Error);
}

TEST(Thresholds, PresetsAndCustom) {
  EXPECT_EQ(threshold_preset("sevir").thresholds, (std::vector<double>{16, 74, 133, 160, 181, 219}));
  EXPECT_EQ(threshold_preset("meteonet").thresholds, (std::vector<double>{12, 18, 24, 32}));
  EXPECT_EQ(threshold_preset("shanghai").thresholds, (std::vector<double>{20, 30, 35, 40}));
  EXPECT_EQ(threshold_preset("cikm").thresholds, (std::vector<double>{20, 30, 35, 40}));
  EXPECT_EQ(threshold_preset("synthetic").thresholds, (std::vector<double>{0.2, 0.5}));
  EXPECT_EQ(threshold_preset("custom:1,2.5,7").thresholds, (std::vector<double>{1, 2.5, 7}));
  EXPECT_THROW(threshold_preset("custom:3,1"), Error);
  EXPECT_THROW(threshold_preset("nope"), Error);
}

TEST(Mse, Examples) {
  const auto x = torch::rand({3, 8, 8});
  EXPECT_DOUBLE_EQ(mse(x, x), 0.0);
  EXPECT_NEAR(mse(x + 2.0, x), 4.0, 1e-5);
  EXPECT_THROW(mse(torch::zeros({2}), torch::zeros({3})), Error);
}

TEST(Mse, MatchesSummationOracle) {
  const auto a = torch::rand({4, 16, 16}, torch::kFloat64) * 255;
  const auto b = torch::rand({4, 16, 16}, torch::kFloat64) * 255;
  auto aa = a.view(-1), bb = b.view(-1);
  double s = 0;
  for (std::int64_t i = 0; i < aa.size(0); ++i) {
    const double d = aa[i].item<double>() - bb[i].item<double>();
    s += d * d;
  }
  const double oracle = s / static_cast<double>(aa.size(0));
  EXPECT_NEAR(mse(a, b) / oracle, 1.0, 1e-6);
}

TEST(Accumulator, PerStepTablesAndMerge) {
  ThresholdSet t{"t", {0.3, 0.6}};
  const auto p = torch::rand({6, 4, 8, 8}), o = torch::rand({6, 4, 8, 8});
  MetricAccumulator whole(t, 4), a(t, 4), b(t, 4);
  whole.add(p, o);
  a.add(p.narrow(0, 0, 2), o.narrow(0, 0, 2));
  b.add(p.narrow(0, 2, 4), o.narrow(0, 2, 4));
  a.merge(b);
  for (std::size_t ti = 0; ti < 2; ++ti) {
    EXPECT_EQ(a.table(ti), whole.table(ti));
    EXPECT_EQ(whole.table(ti), accumulate(p, o, t.thresholds[ti]));
    for (std::int64_t k = 0; k < 4; ++k) {
      EXPECT_EQ(whole.table(ti, k), accumulate(p.select(1, k), o.select(1, k), t.thresholds[ti]));
    }
  }
  EXPECT_NEAR(a.mse(), mse(p, o), 1e-6);
  EXPECT_NEAR(whole.mse_at(2), mse(p.select(1, 2), o.select(1, 2)), 1e-6);
  EXPECT_EQ(whole.samples(), 6);
}

TEST(LeadTime, PerfectForecastIsFlat) {
  const auto f = torch::rand({3, 5, 8, 8});
  const auto c = lead_time_curves(f, f, ThresholdSet{"t", {0.2, 0.5}});
  ASSERT_EQ(c.csi_m.size(), 5u);
  for (double v : c.csi_m) EXPECT_DOUBLE_EQ(v, 1.0);
  for (double v : c.mse) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LeadTime, SingleStepEqualsGlobalMetrics) {
  const auto p = torch::rand({4, 1, 8, 8}), o = torch::rand({4, 1, 8, 8});
  ThresholdSet t{"t", {0.2, 0.7}};
  const auto c = lead_time_curves(p, o, t);
  ASSERT_EQ(c.csi_m.size(), 1u);
  EXPECT_DOUBLE_EQ(c.csi_m[0], csi_m(p, o, t));
  MetricAccumulator acc(t, 1);
  acc.add(p, o);
  EXPECT_DOUBLE_EQ(c.hss[0], summarize(acc).hss);
}

TEST(LeadTime, PersistenceOnMovingBlobDegradesWithLead) {
  AdvectionParams p;
  p.n_blobs = 1;
  p.vx = 2.0;
  p.vy = 1.0;
  p.T = 20;
  p.seed = 2;
  p.sigma_min = p.sigma_max = 4.0;
  const auto frames = synthesize_advection(p).frames;
  // Condition frames 0..4, targets 5..14; persistence repeats frame 4.
  const auto obs = frames.narrow(0, 5, 10).unsqueeze(0);
  const auto pred = frames[4].unsqueeze(0).unsqueeze(0).expand_as(obs);
  const auto c = lead_time_curves(pred, obs, ThresholdSet{"t", {0.2, 0.5}});
  for (std::size_t k = 1; k < c.csi_m.size(); ++k) EXPECT_LE(c.csi_m[k], c.csi_m[k - 1] + 1e-12);
  EXPECT_LT(c.csi_m.back(), c.csi_m.front());
}

TEST(Summarize, ReportHasOneRowPerThreshold) {
  MetricAccumulator acc(threshold_preset("sevir"), 3);
  acc.add(torch::rand({2, 3, 8, 8}) * 255, torch::rand({2, 3, 8, 8}) * 255);
  const auto r = summarize(acc);
  EXPECT_EQ(r.per_threshold.size(), 6u);
  EXPECT_EQ(r.lead_time.csi_m.size(), 3u);
  double mean = 0;
  for (const auto& s : r.per_threshold) mean += s.csi / 6.0;
  EXPECT_NEAR(r.csi_m, mean, 1e-12);
}

}  // namespace
