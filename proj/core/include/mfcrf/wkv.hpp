#pragma once

#include <torch/torch.h>

namespace mfcrf {

/// Bidirectional WKV token mixing over (B, T, D) keys/values with per-channel decay w >= 0 and
/// self bonus u (both shape (D)):
///
///   out_t = (sum_{i != t} e^{k_i - w (|t - i| - 1)} v_i + e^{u + k_t} v_t)
///         / (sum_{i != t} e^{k_i - w (|t - i| - 1)}     + e^{u + k_t})
///
/// Evaluated with one forward and one backward prefix scan in O(T D), with running-max
/// rescaling of the exponentials. Gradients w.r.t. k, v, w and u are analytic scans as well.
torch::Tensor bi_wkv(const torch::Tensor& k, const torch::Tensor& v, const torch::Tensor& w,
                     const torch::Tensor& u);

}  // namespace mfcrf
