#include "mfcrf/layers.hpp"

namespace mfcrf {
namespace {

thread_local MacCounter* active_counter = nullptr;

}  // namespace

MacCounter::MacCounter() : previous_(active_counter) { active_counter = this; }

MacCounter::~MacCounter() { active_counter = previous_; }

void record_macs(double macs) {
  for (auto* c = active_counter; c != nullptr; c = c->previous_) {
    c->macs_ += macs;
  }
}

ConvImpl::ConvImpl(const ConvSpec& spec) : spec_(spec) {
  TORCH_CHECK(spec.in > 0 && spec.out > 0, "Conv: channel counts must be positive");
  TORCH_CHECK(spec.kernel % 2 == 1, "Conv: kernel must be odd");
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.in, spec.out, spec.kernel)
                                    .stride(spec.stride)
                                    .padding(spec.kernel / 2)
                                    .groups(spec.groups)
                                    .bias(spec.bias)));
}

torch::Tensor ConvImpl::forward(const torch::Tensor& x) {
  auto y = conv->forward(x);
  record_macs(static_cast<double>(y.numel()) *
              static_cast<double>(spec_.in / spec_.groups * spec_.kernel * spec_.kernel));
  return y;
}

void ConvImpl::zero_() {
  torch::NoGradGuard no_grad;
  conv->weight.zero_();
  if (conv->bias.defined()) {
    conv->bias.zero_();
  }
}

DenseImpl::DenseImpl(std::int64_t in, std::int64_t out, bool bias) {
  linear = register_module("linear", torch::nn::Linear(torch::nn::LinearOptions(in, out).bias(bias)));
}

torch::Tensor DenseImpl::forward(const torch::Tensor& x) {
  auto y = linear->forward(x);
  record_macs(static_cast<double>(y.numel()) * static_cast<double>(linear->options.in_features()));
  return y;
}

void DenseImpl::zero_() {
  torch::NoGradGuard no_grad;
  linear->weight.zero_();
  if (linear->bias.defined()) {
    linear->bias.zero_();
  }
}

ConvBnReluImpl::ConvBnReluImpl(std::int64_t in, std::int64_t out, std::int64_t kernel) {
  conv = register_module("conv", Conv(ConvSpec{in, out, kernel, 1, 1, false}));
  bn = register_module("bn", torch::nn::BatchNorm2d(out));
}

torch::Tensor ConvBnReluImpl::forward(const torch::Tensor& x) {
  return torch::relu(bn->forward(conv->forward(x)));
}

std::int64_t norm_groups(std::int64_t channels) {
  for (std::int64_t g = 8; g > 1; --g) {
    if (channels % g == 0) {
      return g;
    }
  }
  return 1;
}

torch::Tensor resize_to(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.size(-2) == h && x.size(-1) == w) {
    return x;
  }
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(true));
}

ResBlockImpl::ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t time_dim) : out_(out) {
  norm1 = register_module("norm1", torch::nn::GroupNorm(norm_groups(in), in));
  conv1 = register_module("conv1", Conv(in, out, 3));
  norm2 = register_module("norm2", torch::nn::GroupNorm(norm_groups(out), out));
  conv2 = register_module("conv2", Conv(out, out, 3));
  if (time_dim > 0) {
    time_proj = register_module("time_proj", Dense(time_dim, 2 * out));
  }
  if (in != out) {
    shortcut = register_module("shortcut", Conv(in, out, 1));
  }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1->forward(torch::silu(norm1->forward(x)));
  h = norm2->forward(h);
  if (time_proj && temb.defined()) {
    auto ss = time_proj->forward(torch::silu(temb)).view({-1, 2 * out_, 1, 1});
    auto parts = ss.chunk(2, 1);
    h = h * (1.0 + parts[0]) + parts[1];
  }
  h = conv2->forward(torch::silu(h));
  return (shortcut ? shortcut->forward(x) : x) + h;
}

}  // namespace mfcrf
