#include "mfcrf/dwt.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <utility>
#include <vector>

namespace {

using namespace mfcrf;

using oracle::db4_high;
using oracle::kDb4Low;

TEST(Db4, TapsAreOrthonormal) {
  const auto& lo = db4_lowpass();
  const auto& hi = db4_highpass();
  double sum = 0, sq = 0, hsum = 0, cross = 0;
  for (int j = 0; j < 8; ++j) {
    EXPECT_NEAR(lo[j], kDb4Low[j], 1e-15);
    EXPECT_NEAR(hi[j], db4_high(j), 1e-15);
    sum += lo[j];
    sq += lo[j] * lo[j];
    hsum += hi[j];
    cross += lo[j] * hi[j];
  }
  EXPECT_NEAR(sum, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(sq, 1.0, 1e-12);
  EXPECT_NEAR(hsum, 0.0, 1e-12);
  EXPECT_NEAR(cross, 0.0, 1e-12);
  for (int s = 2; s < 8; s += 2) {
    double dot = 0;
    for (int j = 0; j + s < 8; ++j) dot += lo[j] * lo[j + s];
    EXPECT_NEAR(dot, 0.0, 1e-10) << "shift " << s;
  }
}

TEST(Dwt, ConstantInputHasNoDetail) {
  const auto f = torch::full({2, 3, 16, 12}, 1.75, torch::kFloat64);
  const auto b = dwt2_db4(f);
  EXPECT_EQ(b.ll.sizes(), (torch::IntArrayRef{2, 3, 8, 6}));
  EXPECT_LT(b.lh.abs().max().item<double>(), 1e-6);
  EXPECT_LT(b.hl.abs().max().item<double>(), 1e-6);
  EXPECT_LT(b.hh.abs().max().item<double>(), 1e-6);
  EXPECT_TRUE(torch::allclose(b.ll, torch::full_like(b.ll, 3.5), 0, 1e-9));
}

TEST(Dwt, MatchesNaiveOracle) {
  torch::manual_seed(2);
  for (const auto& [h, w] : std::vector<std::pair<int, int>>{{8, 8}, {9, 12}, {16, 11}, {32, 32}}) {
    const auto f = torch::randn({1, 2, h, w}, torch::kFloat64);
    const auto b = dwt2_db4(f);
    EXPECT_EQ(b.hh.size(2), (h + 1) / 2);
    EXPECT_EQ(b.hh.size(3), (w + 1) / 2);
    for (int c = 0; c < 2; ++c) {
      const auto img = f[0][c];
      EXPECT_TRUE(torch::allclose(b.ll[0][c], oracle::dwt_band(img, false, false), 0, 1e-10))
          << h << "x" << w;
      EXPECT_TRUE(torch::allclose(b.lh[0][c], oracle::dwt_band(img, false, true), 0, 1e-10));
      EXPECT_TRUE(torch::allclose(b.hl[0][c], oracle::dwt_band(img, true, false), 0, 1e-10));
      EXPECT_TRUE(torch::allclose(b.hh[0][c], oracle::dwt_band(img, true, true), 0, 1e-10));
    }
  }
}

TEST(Dwt, EdgeOrientation) {
  // Intensity changing along height only: horizontal edges land in lh, nothing in hl.
  auto f = torch::zeros({1, 1, 16, 16}, torch::kFloat64);
  f.narrow(2, 8, 8).fill_(1.0);
  const auto b = dwt2_db4(f);
  EXPECT_GT(b.lh.abs().max().item<double>(), 0.1);
  EXPECT_LT(b.hl.abs().max().item<double>(), 1e-9);
}

TEST(Dwt, RejectsMapsBelowFilterSupport) {
  EXPECT_THROW(dwt2_db4(torch::rand({1, 1, 7, 8})), c10::Error);
  EXPECT_THROW(dwt2_db4(torch::rand({1, 1, 8, 4})), c10::Error);
  EXPECT_THROW(dwt2_db4(torch::rand({8, 8})), c10::Error);
}

TEST(Dwt, DetachControlsGradientFlow) {
  const auto f = torch::randn({1, 2, 8, 8}, torch::kFloat64).requires_grad_();
  EXPECT_FALSE(dwt2_db4(f).ll.requires_grad());

  // Attached: linear operator, so the gradient of <band, g> is the adjoint applied to g.
  const auto b = dwt2_db4(f, false);
  const auto g = torch::randn_like(b.hl);
  (b.hl * g).sum().backward();
  ASSERT_TRUE(f.grad().defined());
  const auto probe = torch::randn_like(f);
  const double lhs = (dwt2_db4(probe).hl * g).sum().item<double>();
  const double rhs = (probe * f.grad()).sum().item<double>();
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

}  // namespace
