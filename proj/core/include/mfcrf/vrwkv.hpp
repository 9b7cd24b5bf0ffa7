#pragma once

#include "mfcrf/layers.hpp"
#include "mfcrf/wkv.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace mfcrf {

/// Flattened (B, T, D) view of a (B, C, h, w) map, tokens in row-major order.
struct TokenGrid {
  torch::Tensor tokens;
  std::int64_t height = 0;
  std::int64_t width = 0;

  static TokenGrid flatten(const torch::Tensor& map);
  torch::Tensor unflatten() const;
};

/// Shifts the four channel quarters by `shift` pixels right, left, down and up respectively,
/// zero-filling vacated pixels. C must be divisible by 4.
torch::Tensor q_shift(const torch::Tensor& map, std::int64_t shift = 1);

enum class DecayScale {
  kRaw,        // exponent uses the raw token distance
  kPerLength,  // decay divided by the token count
};

DecayScale parse_decay_scale(const std::string& name);

struct VrwkvOptions {
  std::int64_t channels = 0;
  std::int64_t compression = 4;  // hidden width = channels / compression
  std::int64_t shift = 1;
  DecayScale decay_scale = DecayScale::kRaw;
};

/// q-shift -> r/k/v projections -> bi-WKV -> sigmoid(r) gate -> output projection, residual.
class SpatialMixImpl : public torch::nn::Module {
 public:
  explicit SpatialMixImpl(const VrwkvOptions& options);

  /// Pre-projection activation sigmoid(r) * wkv(k, v), plus v, both (B, T, hidden).
  std::pair<torch::Tensor, torch::Tensor> gated_wkv(const torch::Tensor& map);
  torch::Tensor forward(const torch::Tensor& map);

  /// Effective per-channel decay for a sequence of `tokens` tokens.
  torch::Tensor decay(std::int64_t tokens) const;

  torch::nn::LayerNorm norm{nullptr};
  torch::Tensor mix_k, mix_v, mix_r;
  Dense key{nullptr}, value{nullptr}, receptance{nullptr}, output{nullptr};
  torch::Tensor decay_log;  // w = exp(decay_log) >= 0
  torch::Tensor bonus;      // u

 private:
  VrwkvOptions opt_;
};
TORCH_MODULE(SpatialMix);

/// q-shift -> gated two-layer feed-forward, residual.
class ChannelMixImpl : public torch::nn::Module {
 public:
  explicit ChannelMixImpl(const VrwkvOptions& options);

  torch::Tensor forward(const torch::Tensor& map);

  torch::nn::LayerNorm norm{nullptr};
  torch::Tensor mix_k, mix_r;
  Dense key{nullptr}, value{nullptr}, receptance{nullptr};

 private:
  VrwkvOptions opt_;
};
TORCH_MODULE(ChannelMix);

class VrwkvBlockImpl : public torch::nn::Module {
 public:
  explicit VrwkvBlockImpl(const VrwkvOptions& options);

  torch::Tensor forward(const torch::Tensor& map);

  SpatialMix spatial{nullptr};
  ChannelMix channel{nullptr};
};
TORCH_MODULE(VrwkvBlock);

}  // namespace mfcrf
