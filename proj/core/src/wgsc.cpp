#include "mfcrf/wgsc.hpp"

#include <algorithm>
#include <vector>

namespace mfcrf {

WgscImpl::WgscImpl(WgscOptions options) : opt_(options) {
  const auto C = opt_.channels;
  TORCH_CHECK(C > 0, "WGSC: channels must be positive");
  const auto hidden = std::max<std::int64_t>(C / opt_.channel_reduction, 1);

  phi_low = register_module("phi_low", torch::nn::Sequential(Conv(C, C, 3), torch::nn::ReLU()));
  phi_high =
      register_module("phi_high", torch::nn::Sequential(Conv(3 * C, C, 3), torch::nn::ReLU()));
  phi_fuse = register_module("phi_fuse", Conv(2 * C, C, 3));
  spatial_attention = register_module("spatial_attention", Conv(2, 1, opt_.spatial_kernel));
  channel_attention = register_module(
      "channel_attention",
      torch::nn::Sequential(Dense(3 * C, hidden), torch::nn::ReLU(), Dense(hidden, C)));
  wavelet_gate = register_module(
      "wavelet_gate", torch::nn::Sequential(Conv(C, C, 3), torch::nn::ReLU(), Conv(C, C, 1)));
  enc_proc = register_module("enc_proc", Conv(C, C, 3));
  dec_proc = register_module("dec_proc", Conv(C, C, 3));
  fusion_head = register_module("fusion_head", Conv(2 * C, C, 1));
  out_block = register_module("out_block", Conv(2 * C, C, 3));
}

namespace {

// Half-sample symmetric extension of dim `dim` up to `target` samples.
torch::Tensor symmetric_extend(const torch::Tensor& x, std::int64_t dim, std::int64_t target) {
  const auto n = x.size(dim);
  if (n >= target) return x;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(target));
  for (std::int64_t i = 0; i < target; ++i) {
    std::int64_t j = i % (2 * n);
    idx[static_cast<std::size_t>(i)] = j < n ? j : 2 * n - 1 - j;
  }
  return x.index_select(dim, torch::tensor(idx, torch::dtype(torch::kLong).device(x.device())));
}

constexpr std::int64_t kMinDwtSize = 8;

}  // namespace

GuidanceMap WgscImpl::guidance(const torch::Tensor& f_cond) {
  const auto H = f_cond.size(2), W = f_cond.size(3);
  // Maps smaller than the filter support are extended symmetrically, transformed, and the
  // upsampled guidance is cropped back.
  const auto ext = symmetric_extend(symmetric_extend(f_cond, 2, kMinDwtSize), 3, kMinDwtSize);
  const auto He = ext.size(2), We = ext.size(3);
  const auto bands = dwt2_db4(ext, opt_.detach_dwt);
  auto q_low = resize_to(phi_low->forward(bands.ll), He, We);
  auto q_high =
      resize_to(phi_high->forward(torch::cat({bands.lh, bands.hl, bands.hh}, 1)), He, We);
  auto a = torch::sigmoid(phi_fuse->forward(torch::cat({q_low, q_high}, 1)));
  if (He != H || We != W) a = a.narrow(2, 0, H).narrow(3, 0, W);
  return {a};
}

GateTriple WgscImpl::synthesize_gates(const torch::Tensor& f_enc, const torch::Tensor& f_dec,
                                      const GuidanceMap& guide) {
  TORCH_CHECK(f_enc.sizes() == f_dec.sizes() && f_enc.sizes() == guide.a_wav.sizes(),
              "WGSC: encoder ", f_enc.sizes(), ", decoder ", f_dec.sizes(), " and guidance ",
              guide.a_wav.sizes(), " must match");
  const auto comb = torch::cat({f_enc, f_dec, guide.a_wav}, 1);
  const auto pooled = torch::cat(
      {comb.mean(1, /*keepdim=*/true), std::get<0>(comb.max(1, /*keepdim=*/true))}, 1);
  GateTriple g;
  g.m_s = torch::sigmoid(spatial_attention->forward(pooled));
  g.m_c = torch::sigmoid(channel_attention->forward(comb.mean({2, 3})))
              .view({comb.size(0), opt_.channels, 1, 1});
  g.m_w = torch::sigmoid(wavelet_gate->forward(guide.a_wav));
  return g;
}

SkipFusion WgscImpl::adaptive_fuse(const torch::Tensor& f_enc, const torch::Tensor& f_dec,
                                   const GateTriple& gates) {
  SkipFusion s;
  s.p_enc = enc_proc->forward(f_enc * gates.m_s * gates.m_c);
  s.p_dec = dec_proc->forward(f_dec * gates.m_w);
  s.omega = torch::sigmoid(fusion_head->forward(torch::cat({s.p_enc, s.p_dec}, 1)));
  s.fused = s.omega * s.p_enc + (1.0 - s.omega) * s.p_dec;
  s.out = out_block->forward(torch::cat({s.fused, f_enc}, 1));
  return s;
}

torch::Tensor WgscImpl::forward(const torch::Tensor& f_enc, const torch::Tensor& f_dec,
                                const torch::Tensor& f_cond) {
  const auto guide = guidance(f_cond);
  return adaptive_fuse(f_enc, f_dec, synthesize_gates(f_enc, f_dec, guide)).out;
}

}  // namespace mfcrf
