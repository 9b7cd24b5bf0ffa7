#pragma once

#include "mfcrf/dwt.hpp"
#include "mfcrf/layers.hpp"

#include <torch/torch.h>

#include <cstdint>

namespace mfcrf {

struct GuidanceMap {
  torch::Tensor a_wav;  // (N, C, H, W) in [0, 1]
};

struct GateTriple {
  torch::Tensor m_s;  // (N, 1, H, W)
  torch::Tensor m_c;  // (N, C, 1, 1)
  torch::Tensor m_w;  // (N, C, H, W)
};

struct SkipFusion {
  torch::Tensor p_enc;  // processed, gated encoder stream
  torch::Tensor p_dec;  // processed, gated decoder stream
  torch::Tensor omega;  // (N, C, H, W) in (0, 1)
  torch::Tensor fused;  // omega * p_enc + (1 - omega) * p_dec
  torch::Tensor out;
};

struct WgscOptions {
  std::int64_t channels = 0;
  bool detach_dwt = true;
  std::int64_t channel_reduction = 4;
  std::int64_t spatial_kernel = 7;
};

/// Wavelet-guided skip connection: db4 bands of the conditional features drive a guidance
/// map, which with spatial/channel attention gates the encoder/decoder skip fusion.
class WgscImpl : public torch::nn::Module {
 public:
  explicit WgscImpl(WgscOptions options);

  GuidanceMap guidance(const torch::Tensor& f_cond);
  GateTriple synthesize_gates(const torch::Tensor& f_enc, const torch::Tensor& f_dec,
                              const GuidanceMap& guide);
  SkipFusion adaptive_fuse(const torch::Tensor& f_enc, const torch::Tensor& f_dec,
                           const GateTriple& gates);

  torch::Tensor forward(const torch::Tensor& f_enc, const torch::Tensor& f_dec,
                        const torch::Tensor& f_cond);

  const WgscOptions& options() const { return opt_; }

  torch::nn::Sequential phi_low{nullptr};
  torch::nn::Sequential phi_high{nullptr};
  Conv phi_fuse{nullptr};
  Conv spatial_attention{nullptr};
  torch::nn::Sequential channel_attention{nullptr};
  torch::nn::Sequential wavelet_gate{nullptr};
  Conv enc_proc{nullptr};
  Conv dec_proc{nullptr};
  Conv fusion_head{nullptr};
  Conv out_block{nullptr};

 private:
  WgscOptions opt_;
};
TORCH_MODULE(Wgsc);

}  // namespace mfcrf
