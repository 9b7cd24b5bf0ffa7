#include "mfcrf/cgstf.hpp"

#include "mfcrf/error.hpp"

namespace mfcrf {

AlphaMode parse_alpha_mode(const std::string& name) {
  if (name == "pixel") return AlphaMode::kPixel;
  if (name == "fixed") return AlphaMode::kFixed;
  throw Error("cgstf.alpha_mode must be \"pixel\" or \"fixed\", got \"" + name + "\"");
}

CgstfImpl::CgstfImpl(CgstfOptions options) : opt_(options) {
  TORCH_CHECK(opt_.main_channels > 0 && opt_.cond_channels > 0 && opt_.out_channels > 0,
              "CGSTF: channel counts must be positive");
  const auto hidden = opt_.hidden_channels > 0 ? opt_.hidden_channels : opt_.cond_channels;
  auto last = Conv(hidden, 2, 3);
  last->zero_();
  offset_net = register_module(
      "offset_net",
      torch::nn::Sequential(Conv(opt_.cond_channels, hidden, 3), torch::nn::ReLU(), last));
  fusion = register_module("fusion",
                           Conv(opt_.main_channels + opt_.cond_channels, opt_.out_channels, 1));
}

double CgstfImpl::alpha_for_width(std::int64_t width) const {
  if (opt_.alpha_mode == AlphaMode::kFixed) {
    return opt_.alpha_fixed;
  }
  return width > 1 ? 2.0 / static_cast<double>(width - 1) : 1.0;
}

DisplacementField CgstfImpl::predict_offsets(const torch::Tensor& f_cond) {
  DisplacementField field;
  field.alpha = alpha_for_width(f_cond.size(3));
  field.offsets = field.alpha * torch::tanh(offset_net->forward(f_cond));
  return field;
}

SamplingGrid CgstfImpl::sampling_grid(const DisplacementField& field) const {
  SamplingGrid grid;
  grid.base = make_base_grid(field.offsets.size(2), field.offsets.size(3), field.offsets.options());
  grid.offset = field.offsets.permute({0, 2, 3, 1});
  return grid;
}

torch::Tensor CgstfImpl::warp(const torch::Tensor& f_main, const DisplacementField& field) const {
  return grid_sample(f_main, sampling_grid(field));
}

torch::Tensor CgstfImpl::fuse(const torch::Tensor& f_warp, const torch::Tensor& f_cond) {
  TORCH_CHECK(f_warp.size(2) == f_cond.size(2) && f_warp.size(3) == f_cond.size(3),
              "CGSTF: spatial mismatch between warped and conditional features");
  TORCH_CHECK(f_warp.size(1) + f_cond.size(1) == opt_.main_channels + opt_.cond_channels,
              "CGSTF: channel mismatch, expected ", opt_.main_channels, " + ", opt_.cond_channels);
  return fusion->forward(torch::cat({f_warp, f_cond}, 1));
}

torch::Tensor CgstfImpl::forward(const torch::Tensor& f_main, const torch::Tensor& f_cond) {
  return fuse(warp(f_main, predict_offsets(f_cond)), f_cond);
}

}  // namespace mfcrf
