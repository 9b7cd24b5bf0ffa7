#pragma once

#include "mfcrf/layers.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace mfcrf {

enum class KanMode { kSpline, kFeedForward };

KanMode parse_kan_mode(const std::string& name);
std::string to_string(KanMode mode);

/// Layer of learnable univariate functions: every input/output edge carries
/// silu(x) * base + scale * sum_j c_j B_j(x) with cubic B-splines on a uniform grid.
class KanLinearImpl : public torch::nn::Module {
 public:
  KanLinearImpl(std::int64_t in, std::int64_t out, std::int64_t grid_size = 5,
                std::int64_t order = 3, double grid_lo = -1.0, double grid_hi = 1.0);

  /// B-spline basis values, (..., in) -> (..., in, grid_size + order).
  torch::Tensor basis(const torch::Tensor& x) const;
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t basis_count() const { return grid_size_ + order_; }

  torch::Tensor base_weight;    // (out, in)
  torch::Tensor spline_weight;  // (out, in, basis)
  torch::Tensor spline_scale;   // (out, in)

 private:
  std::int64_t in_, out_, grid_size_, order_;
  torch::Tensor knots_;  // buffer, grid_size + 2 * order + 1 knots
};
TORCH_MODULE(KanLinear);

struct KanBlockOptions {
  std::int64_t channels = 0;
  KanMode mode = KanMode::kSpline;
  std::int64_t grid_size = 5;
  std::int64_t order = 3;
  std::int64_t ff_expansion = 5;  // hidden width of the feed-forward substitute, x channels
};

/// Tokenized bottleneck block: LayerNorm -> token operator -> depthwise 3x3 -> token operator,
/// scaled by a zero-initialised per-channel gain and added residually. The token operator is a
/// KAN layer (spline mode) or a two-layer MLP of similar size (feed-forward mode).
class KanBlockImpl : public torch::nn::Module {
 public:
  explicit KanBlockImpl(const KanBlockOptions& options);

  torch::Tensor forward(const torch::Tensor& map);

  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Sequential first{nullptr};
  Conv depthwise{nullptr};
  torch::nn::Sequential second{nullptr};
  torch::Tensor out_scale;

 private:
  KanBlockOptions opt_;
};
TORCH_MODULE(KanBlock);

}  // namespace mfcrf
