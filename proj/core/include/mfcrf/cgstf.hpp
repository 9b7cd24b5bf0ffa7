#pragma once

#include "mfcrf/grid_sample.hpp"
#include "mfcrf/layers.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace mfcrf {

/// Offsets O = alpha * tanh(phi(F_cond)), shape (N, 2, H, W), channel 0 along width.
struct DisplacementField {
  torch::Tensor offsets;
  double alpha = 0.0;
};

enum class AlphaMode {
  kPixel,  // alpha = 2 / (W - 1): a unit offset moves one pixel
  kFixed,
};

AlphaMode parse_alpha_mode(const std::string& name);

struct CgstfOptions {
  std::int64_t main_channels = 0;
  std::int64_t cond_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t hidden_channels = 0;  // 0 -> cond_channels
  AlphaMode alpha_mode = AlphaMode::kPixel;
  double alpha_fixed = 0.1;
};

/// Condition-guided spatial transform fusion: warp backbone features along an offset field
/// predicted from the conditional features, then 1x1-fuse with them.
class CgstfImpl : public torch::nn::Module {
 public:
  explicit CgstfImpl(CgstfOptions options);

  double alpha_for_width(std::int64_t width) const;

  DisplacementField predict_offsets(const torch::Tensor& f_cond);
  /// Identity base grid plus the (axis-reordered) offsets.
  SamplingGrid sampling_grid(const DisplacementField& field) const;
  torch::Tensor warp(const torch::Tensor& f_main, const DisplacementField& field) const;
  torch::Tensor fuse(const torch::Tensor& f_warp, const torch::Tensor& f_cond);

  torch::Tensor forward(const torch::Tensor& f_main, const torch::Tensor& f_cond);

  const CgstfOptions& options() const { return opt_; }

  torch::nn::Sequential offset_net{nullptr};
  Conv fusion{nullptr};

 private:
  CgstfOptions opt_;
};
TORCH_MODULE(Cgstf);

}  // namespace mfcrf
