#include "mfcrf/dwt.hpp"

#include "mfcrf/layers.hpp"

namespace mfcrf {
namespace {

constexpr std::int64_t kTaps = 8;

// Indices of the half-sample symmetric extension covering x(-3) .. x(2K + 3), K = ceil(n / 2).
torch::Tensor extension_index(std::int64_t n) {
  const auto k = (n + 1) / 2;
  const auto len = 2 * k + kTaps - 1;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(len));
  for (std::int64_t p = 0; p < len; ++p) {
    auto i = p - 3;
    while (i < 0 || i >= n) {
      i = i < 0 ? -i - 1 : 2 * n - 1 - i;
    }
    idx[static_cast<std::size_t>(p)] = i;
  }
  return torch::tensor(idx, torch::kInt64);
}

// Cross-correlation weights: w[m] = h[7 - m] realizes sum_j h[j] x(2k + 4 - j).
torch::Tensor filter_bank(const torch::TensorOptions& options) {
  std::vector<double> w;
  for (const auto* bank : {&db4_lowpass(), &db4_highpass()}) {
    for (std::int64_t m = 0; m < kTaps; ++m) {
      w.push_back((*bank)[static_cast<std::size_t>(kTaps - 1 - m)]);
    }
  }
  return torch::tensor(w, torch::kFloat64).to(options).view({2, 1, kTaps});
}

}  // namespace

const std::array<double, 8>& db4_lowpass() {
  static const std::array<double, 8> taps = {
      -0.010597401784997278, 0.032883011666982945, 0.030841381835986965, -0.18703481171888114,
      -0.02798376941698385,  0.6308807679295904,   0.7148465705525415,   0.23037781330885523};
  return taps;
}

const std::array<double, 8>& db4_highpass() {
  static const std::array<double, 8> taps = {
      -0.23037781330885523, 0.7148465705525415,  -0.6308807679295904,  -0.02798376941698385,
      0.18703481171888114,  0.030841381835986965, -0.032883011666982945, -0.010597401784997278};
  return taps;
}

WaveletBands dwt2_db4(const torch::Tensor& f_in, bool detach) {
  TORCH_CHECK(f_in.dim() == 4, "dwt2_db4: expected (N, C, H, W), got ", f_in.sizes());
  const auto N = f_in.size(0), C = f_in.size(1), H = f_in.size(2), W = f_in.size(3);
  TORCH_CHECK(H >= kTaps && W >= kTaps, "dwt2_db4: spatial size ", H, "x", W,
              " is below the 8-tap filter support");

  const auto f = detach ? f_in.detach() : f_in;
  const auto bank = filter_bank(f.options().requires_grad(false));
  const auto kh = (H + 1) / 2, kw = (W + 1) / 2;

  // Along width: (N*C, 1, H, Wext) -> (N*C, 2, H, kw).
  auto x = f.reshape({N * C, 1, H, W}).index_select(3, extension_index(W).to(f.device()));
  auto rows = torch::conv2d(x, bank.view({2, 1, 1, kTaps}), {}, {1, 2});
  // Along height: (N*C*2, 1, Hext, kw) -> (N*C*2, 2, kh, kw).
  auto y = rows.reshape({N * C * 2, 1, H, kw}).index_select(2, extension_index(H).to(f.device()));
  auto bands = torch::conv2d(y, bank.view({2, 1, kTaps, 1}), {}, {2, 1})
                   .reshape({N, C, 2, 2, kh, kw});  // [width filter][height filter]
  record_macs(static_cast<double>(N * C) * (2.0 * H * kw + 4.0 * kh * kw) * kTaps);

  WaveletBands out;
  out.ll = bands.select(2, 0).select(2, 0);
  out.lh = bands.select(2, 0).select(2, 1);
  out.hl = bands.select(2, 1).select(2, 0);
  out.hh = bands.select(2, 1).select(2, 1);
  return out;
}

}  // namespace mfcrf
