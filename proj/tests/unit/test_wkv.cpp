#include "mfcrf/wkv.hpp"

#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>

namespace {

using namespace mfcrf;

TEST(BiWkv, SingleTokenReturnsValue) {
  const auto v = torch::randn({2, 1, 3}, torch::kFloat64);
  const auto out = bi_wkv(torch::randn({2, 1, 3}, torch::kFloat64), v,
                          torch::rand({3}, torch::kFloat64), torch::randn({3}, torch::kFloat64));
  EXPECT_TRUE(torch::allclose(out, v, 0, 1e-12));
}

TEST(BiWkv, UniformWeightsGiveMean) {
  torch::manual_seed(1);
  const std::int64_t T = 7;
  const auto v = torch::randn({1, T, 2}, torch::kFloat64);
  const auto k = torch::full({1, T, 2}, 0.4, torch::kFloat64);
  const auto w = torch::zeros({2}, torch::kFloat64);
  const auto mean = v.mean(1, true).expand_as(v);
  EXPECT_TRUE(torch::allclose(bi_wkv(k, v, w, torch::zeros({2}, torch::kFloat64)), mean, 0, 1e-12));

  // Bonus u reweights the self term by e^u.
  const double u = std::log(3.0);
  const auto out = bi_wkv(k, v, w, torch::full({2}, u, torch::kFloat64));
  const auto want = (v.sum(1, true) + 2.0 * v) / static_cast<double>(T + 2);
  EXPECT_TRUE(torch::allclose(out, want, 0, 1e-12));
}

TEST(BiWkv, MatchesPairwiseOracle) {
  torch::manual_seed(2);
  for (const std::int64_t T : {1, 2, 16, 64}) {
    for (const std::int64_t D : {1, 4}) {
      const auto k = torch::randn({2, T, D}, torch::kFloat64) * 2;
      const auto v = torch::randn({2, T, D}, torch::kFloat64);
      const auto w = torch::rand({D}, torch::kFloat64) * 2;
      const auto u = torch::randn({D}, torch::kFloat64);
      const auto got = bi_wkv(k, v, w, u);
      const auto want = oracle::bi_wkv(k, v, w, u);
      const double rel = ((got - want).norm() / want.norm().clamp_min(1e-300)).item<double>();
      EXPECT_LT(rel, 1e-5) << "T=" << T << " D=" << D;
    }
  }
}

TEST(BiWkv, SinglePrecisionMatchesOracle) {
  torch::manual_seed(3);
  const auto k = torch::randn({1, 16, 4});
  const auto v = torch::randn({1, 16, 4});
  const auto w = torch::rand({4});
  const auto u = torch::randn({4});
  const auto got = bi_wkv(k, v, w, u);
  EXPECT_EQ(got.dtype(), torch::kFloat32);
  const auto want = oracle::bi_wkv(k.to(torch::kFloat64), v.to(torch::kFloat64), w.to(torch::kFloat64),
                           u.to(torch::kFloat64));
  EXPECT_TRUE(torch::allclose(got.to(torch::kFloat64), want, 1e-5, 1e-5));
}

TEST(BiWkv, OutputStaysWithinValueRange) {
  torch::manual_seed(4);
  const auto k = torch::randn({3, 50, 4}, torch::kFloat64) * 5;
  const auto v = torch::randn({3, 50, 4}, torch::kFloat64);
  const auto out = bi_wkv(k, v, torch::rand({4}, torch::kFloat64), torch::randn({4}, torch::kFloat64));
  const auto lo = std::get<0>(v.min(1, true));
  const auto hi = std::get<0>(v.max(1, true));
  EXPECT_TRUE((out >= lo - 1e-12).all().item<bool>());
  EXPECT_TRUE((out <= hi + 1e-12).all().item<bool>());
}

TEST(BiWkv, LargeExponentsStayFinite) {
  auto k = torch::zeros({1, 32, 2}, torch::kFloat64);
  k.narrow(1, 0, 16).fill_(800.0);
  k.narrow(1, 16, 16).fill_(-800.0);
  const auto v = torch::randn({1, 32, 2}, torch::kFloat64);
  const auto out = bi_wkv(k, v, torch::full({2}, 0.01, torch::kFloat64),
                          torch::zeros({2}, torch::kFloat64));
  EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
  EXPECT_TRUE(torch::allclose(out, oracle::bi_wkv(k, v, torch::full({2}, 0.01, torch::kFloat64),
                                          torch::zeros({2}, torch::kFloat64)),
                              1e-8, 1e-10));
}

TEST(BiWkv, RejectsMismatchedShapes) {
  const auto k = torch::rand({1, 4, 3});
  EXPECT_THROW(bi_wkv(k, torch::rand({1, 4, 2}), torch::rand({3}), torch::rand({3})), c10::Error);
  EXPECT_THROW(bi_wkv(k, k, torch::rand({2}), torch::rand({3})), c10::Error);
}

TEST(BiWkv, GradientsMatchFiniteDifferences) {
  torch::manual_seed(5);
  const auto k = torch::randn({2, 8, 2}, torch::kFloat64).requires_grad_();
  const auto v = torch::randn({2, 8, 2}, torch::kFloat64).requires_grad_();
  const auto w = (torch::rand({2}, torch::kFloat64) + 0.1).requires_grad_();
  const auto u = torch::randn({2}, torch::kFloat64).requires_grad_();
  const auto g = torch::randn({2, 8, 2}, torch::kFloat64);
  auto loss = [&] { return (bi_wkv(k, v, w, u) * g).sum(); };
  const auto r = check::check_gradients(loss, {k, v, w, u}, 68, 6);
  EXPECT_EQ(r.checked, 68);
  EXPECT_LT(r.relative_error, 1e-6);
}

}  // namespace
