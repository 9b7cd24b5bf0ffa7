#include "mfcrf/vrwkv.hpp"

#include "mfcrf/error.hpp"

namespace mfcrf {
namespace {

torch::Tensor lerp_tokens(const torch::Tensor& x, const torch::Tensor& shifted,
                          const torch::Tensor& mix) {
  return x * mix + shifted * (1.0 - mix);
}

}  // namespace

TokenGrid TokenGrid::flatten(const torch::Tensor& map) {
  TORCH_CHECK(map.dim() == 4, "TokenGrid: expected (B, C, h, w), got ", map.sizes());
  TokenGrid g;
  g.height = map.size(2);
  g.width = map.size(3);
  g.tokens = map.flatten(2).transpose(1, 2);
  return g;
}

torch::Tensor TokenGrid::unflatten() const {
  return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), height, width});
}

torch::Tensor q_shift(const torch::Tensor& map, std::int64_t shift) {
  TORCH_CHECK(map.dim() == 4, "q_shift: expected (B, C, h, w), got ", map.sizes());
  TORCH_CHECK(map.size(1) % 4 == 0, "q_shift: channel count ", map.size(1),
              " is not divisible by 4");
  TORCH_CHECK(shift >= 0, "q_shift: shift must be non-negative");
  if (shift == 0) {
    return map;
  }
  const auto q = map.size(1) / 4;
  const auto H = map.size(2), W = map.size(3);
  const auto s_w = std::min(shift, W);
  const auto s_h = std::min(shift, H);
  namespace F = torch::nn::functional;
  auto part = [&](std::int64_t i) { return map.narrow(1, i * q, q); };
  // F::pad takes (left, right, top, bottom).
  auto right = F::pad(part(0).narrow(3, 0, W - s_w), F::PadFuncOptions({s_w, 0, 0, 0}));
  auto left = F::pad(part(1).narrow(3, s_w, W - s_w), F::PadFuncOptions({0, s_w, 0, 0}));
  auto down = F::pad(part(2).narrow(2, 0, H - s_h), F::PadFuncOptions({0, 0, s_h, 0}));
  auto up = F::pad(part(3).narrow(2, s_h, H - s_h), F::PadFuncOptions({0, 0, 0, s_h}));
  return torch::cat({right, left, down, up}, 1);
}

DecayScale parse_decay_scale(const std::string& name) {
  if (name == "raw") return DecayScale::kRaw;
  if (name == "per_length") return DecayScale::kPerLength;
  throw Error("vrwkv.decay_scale must be \"raw\" or \"per_length\", got \"" + name + "\"");
}

SpatialMixImpl::SpatialMixImpl(const VrwkvOptions& options) : opt_(options) {
  const auto C = opt_.channels;
  TORCH_CHECK(C % 4 == 0, "VRWKV: channels must be divisible by 4, got ", C);
  const auto hidden = std::max<std::int64_t>(C / opt_.compression, 1);
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({C})));
  mix_k = register_parameter("mix_k", torch::full({C}, 0.5));
  mix_v = register_parameter("mix_v", torch::full({C}, 0.5));
  mix_r = register_parameter("mix_r", torch::full({C}, 0.5));
  key = register_module("key", Dense(C, hidden, false));
  value = register_module("value", Dense(C, hidden, false));
  receptance = register_module("receptance", Dense(C, hidden, false));
  output = register_module("output", Dense(hidden, C, false));
  output->zero_();
  // Channels span short to long ranges: w from e^-4 to 1.
  decay_log = register_parameter("decay_log", torch::linspace(-4.0, 0.0, hidden));
  bonus = register_parameter("bonus", torch::full({hidden}, 0.5));
}

torch::Tensor SpatialMixImpl::decay(std::int64_t tokens) const {
  auto w = torch::exp(decay_log);
  return opt_.decay_scale == DecayScale::kPerLength ? w / static_cast<double>(tokens) : w;
}

std::pair<torch::Tensor, torch::Tensor> SpatialMixImpl::gated_wkv(const torch::Tensor& map) {
  const auto grid = TokenGrid::flatten(map);
  auto x = norm->forward(grid.tokens);
  auto shifted_map = q_shift(TokenGrid{x, grid.height, grid.width}.unflatten(), opt_.shift);
  auto xs = TokenGrid::flatten(shifted_map).tokens;
  auto k = key->forward(lerp_tokens(x, xs, mix_k));
  auto v = value->forward(lerp_tokens(x, xs, mix_v));
  auto r = receptance->forward(lerp_tokens(x, xs, mix_r));
  auto mixed = bi_wkv(k, v, decay(x.size(1)), bonus);
  return {torch::sigmoid(r) * mixed, v};
}

torch::Tensor SpatialMixImpl::forward(const torch::Tensor& map) {
  const auto grid = TokenGrid::flatten(map);
  auto out = output->forward(gated_wkv(map).first);
  return map + TokenGrid{out, grid.height, grid.width}.unflatten();
}

ChannelMixImpl::ChannelMixImpl(const VrwkvOptions& options) : opt_(options) {
  const auto C = opt_.channels;
  TORCH_CHECK(C % 4 == 0, "VRWKV: channels must be divisible by 4, got ", C);
  const auto hidden = std::max<std::int64_t>(C / opt_.compression, 1);
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({C})));
  mix_k = register_parameter("mix_k", torch::full({C}, 0.5));
  mix_r = register_parameter("mix_r", torch::full({C}, 0.5));
  key = register_module("key", Dense(C, hidden, false));
  value = register_module("value", Dense(hidden, C, false));
  receptance = register_module("receptance", Dense(C, C, false));
  value->zero_();
}

torch::Tensor ChannelMixImpl::forward(const torch::Tensor& map) {
  const auto grid = TokenGrid::flatten(map);
  auto x = norm->forward(grid.tokens);
  auto xs = TokenGrid::flatten(q_shift(TokenGrid{x, grid.height, grid.width}.unflatten(),
                                       opt_.shift))
                .tokens;
  auto k = torch::relu(key->forward(lerp_tokens(x, xs, mix_k))).square();
  auto r = torch::sigmoid(receptance->forward(lerp_tokens(x, xs, mix_r)));
  auto out = r * value->forward(k);
  return map + TokenGrid{out, grid.height, grid.width}.unflatten();
}

VrwkvBlockImpl::VrwkvBlockImpl(const VrwkvOptions& options) {
  spatial = register_module("spatial", SpatialMix(options));
  channel = register_module("channel", ChannelMix(options));
}

torch::Tensor VrwkvBlockImpl::forward(const torch::Tensor& map) {
  return channel->forward(spatial->forward(map));
}

}  // namespace mfcrf
