#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace mfcrf {

// Multiply-accumulate accounting. While a MacCounter is alive on the current thread, every
// Conv/Dense forward (and the custom kernels) adds its MAC count to it.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  double macs() const { return macs_; }

 private:
  friend void record_macs(double);
  double macs_ = 0.0;
  MacCounter* previous_;
};

void record_macs(double macs);

struct ConvSpec {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t groups = 1;
  bool bias = true;
};

/// 2-D convolution with "same" padding for odd kernels.
class ConvImpl : public torch::nn::Module {
 public:
  explicit ConvImpl(const ConvSpec& spec);
  ConvImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride = 1)
      : ConvImpl(ConvSpec{in, out, kernel, stride}) {}

  torch::Tensor forward(const torch::Tensor& x);
  void zero_();

  torch::nn::Conv2d conv{nullptr};

 private:
  ConvSpec spec_;
};
TORCH_MODULE(Conv);

class DenseImpl : public torch::nn::Module {
 public:
  DenseImpl(std::int64_t in, std::int64_t out, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);
  void zero_();

  torch::nn::Linear linear{nullptr};
};
TORCH_MODULE(Dense);

/// Conv -> BatchNorm -> ReLU.
class ConvBnReluImpl : public torch::nn::Module {
 public:
  ConvBnReluImpl(std::int64_t in, std::int64_t out, std::int64_t kernel);

  torch::Tensor forward(const torch::Tensor& x);

  Conv conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBnRelu);

/// Largest group count <= 8 dividing `channels`.
std::int64_t norm_groups(std::int64_t channels);

/// Corner-aligned bilinear resize of an (N, C, H, W) batch. Returns `x` unchanged when the
/// size already matches.
torch::Tensor resize_to(const torch::Tensor& x, std::int64_t h, std::int64_t w);

/// Residual conv block, GroupNorm + SiLU, optionally modulated by a time embedding through a
/// per-block scale/shift pair.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t time_dim);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb = {});

 private:
  torch::nn::GroupNorm norm1{nullptr};
  Conv conv1{nullptr};
  torch::nn::GroupNorm norm2{nullptr};
  Conv conv2{nullptr};
  Dense time_proj{nullptr};
  Conv shortcut{nullptr};
  std::int64_t out_;
};
TORCH_MODULE(ResBlock);

}  // namespace mfcrf
