#pragma once

#include "mfcrf/cgstf.hpp"
#include "mfcrf/config.hpp"
#include "mfcrf/fcm.hpp"
#include "mfcrf/kan.hpp"
#include "mfcrf/layers.hpp"
#include "mfcrf/vrwkv.hpp"
#include "mfcrf/wgsc.hpp"

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mfcrf {

/// Sinusoidal features of t in [0, 1], (B) -> (B, dim).
torch::Tensor sinusoidal_embedding(const torch::Tensor& t, std::int64_t dim);

/// Stem conv followed by one residual block per level and stride-2 convs between levels.
class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(std::int64_t in_channels, const std::vector<std::int64_t>& widths,
              std::int64_t time_dim);

  /// Plain pass, no cross-stream fusion: the conditional pathway.
  FeaturePyramid forward(const torch::Tensor& x);

  std::int64_t in_channels() const { return in_; }

  Conv stem{nullptr};
  std::vector<ResBlock> blocks;
  std::vector<Conv> downs;

 private:
  std::int64_t in_;
};
TORCH_MODULE(Encoder);

/// Records (stage, shape) pairs while a model runs; used for architecture summaries.
using ShapeTrace = std::vector<std::pair<std::string, std::vector<std::int64_t>>>;

class VelocityNetImpl : public torch::nn::Module {
 public:
  explicit VelocityNetImpl(const ModelConfig& config);

  /// (B, J, H, W) normalized window -> L-level pyramid. Rejects a wrong frame count.
  FeaturePyramid encode_condition(const torch::Tensor& window);
  /// FCM enhancement (identity pass-through when disabled). Independent of t, so samplers
  /// call it once per window.
  FeaturePyramid enhance_condition(const FeaturePyramid& cond_pyr);
  /// Backbone pass on an already enhanced pyramid.
  torch::Tensor velocity_enhanced(const torch::Tensor& z_t, const torch::Tensor& t,
                                  const FeaturePyramid& enhanced);
  /// z_t (B, K, H, W), t (B) -> velocity (B, K, H, W).
  torch::Tensor velocity_forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                 const FeaturePyramid& cond_pyr);
  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& t,
                        const torch::Tensor& window);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::int64_t>& widths() const { return widths_; }

  void set_trace(ShapeTrace* trace) { trace_ = trace; }

  torch::nn::Sequential time_mlp{nullptr};
  Encoder cond_encoder{nullptr};
  Fcm fcm{nullptr};
  Encoder encoder{nullptr};
  std::map<std::int64_t, Cgstf> cgstf;    // by 1-based level
  std::map<std::int64_t, Conv> cond_fuse;  // plain concat fusion where CGSTF is off
  torch::nn::Sequential vrwkv_enc_tail{nullptr};
  ResBlock mid_block1{nullptr};
  torch::nn::Sequential vrwkv_mid{nullptr};
  KanBlock kan{nullptr};
  ResBlock mid_block2{nullptr};
  std::vector<Conv> ups;  // ups[i] maps level i+2 -> level i+1 (1-based levels)
  std::map<std::int64_t, Wgsc> wgsc;
  std::map<std::int64_t, Conv> skip_fuse;
  std::map<std::int64_t, Conv> cond_inject;
  std::vector<ResBlock> dec_blocks;
  torch::nn::Sequential vrwkv_dec_first{nullptr};
  torch::nn::GroupNorm head_norm{nullptr};
  Conv head{nullptr};

 private:
  void trace(const std::string& stage, const torch::Tensor& x);

  ModelConfig cfg_;
  std::vector<std::int64_t> widths_;
  std::int64_t time_dim_ = 0;
  ShapeTrace* trace_ = nullptr;
};
TORCH_MODULE(VelocityNet);

/// Exact trainable-parameter count.
std::int64_t count_parameters(torch::nn::Module& module);
std::int64_t count_parameters(const ModelConfig& config);

/// Multiply-accumulate count (in G) for one velocity evaluation at batch 1 and the given
/// spatial size, counted per layer.
double estimate_gmacs(const ModelConfig& config, std::int64_t height = 128,
                      std::int64_t width = 128);

/// Per-stage output shapes and per-submodule parameter counts.
nlohmann::json architecture_summary(const ModelConfig& config, std::int64_t height,
                                    std::int64_t width);

}  // namespace mfcrf
