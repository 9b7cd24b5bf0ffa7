#pragma once

#include "mfcrf/layers.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace mfcrf {

/// Level i (0-based here) has shape (B, C_i, H / 2^i, W / 2^i); level 0 is the shallowest.
using FeaturePyramid = std::vector<torch::Tensor>;

/// Throws unless every level halves the spatial size of the previous one (rounding up).
void check_dyadic(const FeaturePyramid& pyr);

struct DirectionalPaths {
  std::vector<torch::Tensor> td;
  std::vector<torch::Tensor> bu;
  std::vector<torch::Tensor> lat;
  std::vector<torch::Tensor> alpha;  // per level, (B, 3) softmax weights for (td, bu, lat)
};

struct CrossScaleState {
  std::vector<torch::Tensor> aligned;       // F~_i at the reference resolution
  torch::Tensor w_att;                      // (B, L, H*, W*), softmax over L
  std::vector<torch::Tensor> enhanced_ref;  // R*_i
  std::vector<torch::Tensor> routed;        // R_i at native size
  std::vector<torch::Tensor> gates;         // G_i
};

struct FcmOptions {
  std::vector<std::int64_t> channels;  // C_i per level
  std::int64_t reference_level = 1;    // 0-based; level 1 is H/2 x W/2
  double gamma_init = 0.0;
};

/// Feature communication: multi-directional fusion, pixel-wise cross-scale attention at a
/// reference resolution, and gated residual re-injection into every level.
class FcmImpl : public torch::nn::Module {
 public:
  explicit FcmImpl(FcmOptions options);

  DirectionalPaths build_paths(const FeaturePyramid& pyr);
  std::vector<torch::Tensor> fuse_directions(const DirectionalPaths& paths) const;
  CrossScaleState cross_scale_communicate(const std::vector<torch::Tensor>& fused);
  FeaturePyramid gate_and_inject(CrossScaleState& state, const FeaturePyramid& original);

  FeaturePyramid forward(const FeaturePyramid& pyr);

  std::int64_t levels() const { return static_cast<std::int64_t>(opt_.channels.size()); }
  std::int64_t reference_level() const;
  const FcmOptions& options() const { return opt_; }

  // Learned blocks, exposed for weight surgery in tests.
  std::vector<ConvBnRelu> phi_lat;
  std::vector<ConvBnRelu> phi_td;  // phi_td[i] maps level i+1 -> level i
  std::vector<ConvBnRelu> phi_bu;  // phi_bu[i] maps level i -> level i+1
  std::vector<torch::nn::Sequential> se_head;
  std::vector<Conv> align_proj;
  torch::nn::Sequential attention_head{nullptr};
  std::vector<Conv> phi_other;
  torch::Tensor gamma;
  std::vector<torch::nn::Sequential> route;
  std::vector<torch::nn::Sequential> gate;

 private:
  FcmOptions opt_;
};
TORCH_MODULE(Fcm);

}  // namespace mfcrf
