#pragma once

#include <torch/torch.h>

#include <array>

namespace mfcrf {

/// db4 analysis low-pass taps (orthonormal; sum = sqrt(2)).
const std::array<double, 8>& db4_lowpass();
/// db4 analysis high-pass taps (sum = 0).
const std::array<double, 8>& db4_highpass();

/// One-level 2-D analysis bands, each (N, C, ceil(H/2), ceil(W/2)).
/// lh: low-pass along width, high-pass along height (horizontal edges);
/// hl: high-pass along width, low-pass along height (vertical edges).
struct WaveletBands {
  torch::Tensor ll, lh, hl, hh;
};

/// Separable db4 analysis with half-sample symmetric extension:
///   out[k] = sum_j h[j] * x(2k + 4 - j), x(-1 - i) = x(i), x(N + i) = x(N - 1 - i).
/// Filter taps are constants. With `detach` (the default) the transform is a fixed analysis
/// operator and no gradient flows back through it to `f`.
WaveletBands dwt2_db4(const torch::Tensor& f, bool detach = true);

}  // namespace mfcrf
