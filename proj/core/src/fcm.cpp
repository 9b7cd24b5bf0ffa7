#include "mfcrf/fcm.hpp"

#include <algorithm>
#include <sstream>

namespace mfcrf {

void check_dyadic(const FeaturePyramid& pyr) {
  TORCH_CHECK(!pyr.empty(), "FCM: empty pyramid");
  for (std::size_t i = 1; i < pyr.size(); ++i) {
    const auto h = pyr[i - 1].size(2);
    const auto w = pyr[i - 1].size(3);
    TORCH_CHECK(pyr[i].size(2) == (h + 1) / 2 && pyr[i].size(3) == (w + 1) / 2,
                "FCM: non-dyadic pyramid at level ", i, ": ", pyr[i].sizes(), " after ",
                pyr[i - 1].sizes());
  }
}

FcmImpl::FcmImpl(FcmOptions options) : opt_(std::move(options)) {
  const auto L = levels();
  TORCH_CHECK(L >= 1, "FCM needs at least one level");
  const auto ref = reference_level();
  const auto c_ref = opt_.channels[static_cast<std::size_t>(ref)];

  for (std::int64_t i = 0; i < L; ++i) {
    const auto c = opt_.channels[static_cast<std::size_t>(i)];
    const auto tag = std::to_string(i);
    phi_lat.push_back(register_module("phi_lat" + tag, ConvBnRelu(c, c, 1)));
    if (i + 1 < L) {
      const auto c_next = opt_.channels[static_cast<std::size_t>(i + 1)];
      phi_td.push_back(register_module("phi_td" + tag, ConvBnRelu(c_next, c, 3)));
      phi_bu.push_back(register_module("phi_bu" + tag, ConvBnRelu(c, c_next, 3)));
    }
    const auto hidden = std::max<std::int64_t>(c / 4, 1);
    se_head.push_back(register_module(
        "se_head" + tag,
        torch::nn::Sequential(Dense(c, hidden), torch::nn::ReLU(), Dense(hidden, 3))));
    align_proj.push_back(register_module("align_proj" + tag, Conv(c, c_ref, 1)));
    if (L > 1) {
      phi_other.push_back(register_module("phi_other" + tag, Conv((L - 1) * c_ref, c_ref, 1)));
    }

    auto out_proj = Conv(c, c, 1);
    out_proj->zero_();
    route.push_back(register_module(
        "route" + tag, torch::nn::Sequential(ConvBnRelu(c_ref, c, 3), out_proj)));
    gate.push_back(register_module(
        "gate" + tag,
        torch::nn::Sequential(Conv(c, c, 3), torch::nn::ReLU(), torch::nn::BatchNorm2d(c),
                              Conv(c, c, 1), torch::nn::BatchNorm2d(c), torch::nn::Sigmoid())));
  }
  if (L > 1) {
    attention_head = register_module(
        "attention_head", torch::nn::Sequential(Conv(L * c_ref, c_ref, 3), torch::nn::ReLU(),
                                                Conv(c_ref, L, 3)));
  }
  gamma = register_parameter("gamma", torch::full({1}, opt_.gamma_init));
}

std::int64_t FcmImpl::reference_level() const {
  return std::clamp<std::int64_t>(opt_.reference_level, 0, levels() - 1);
}

DirectionalPaths FcmImpl::build_paths(const FeaturePyramid& pyr) {
  check_dyadic(pyr);
  const auto L = levels();
  TORCH_CHECK(static_cast<std::int64_t>(pyr.size()) == L, "FCM: expected ", L, " levels, got ",
              pyr.size());
  DirectionalPaths p;
  p.lat.resize(static_cast<std::size_t>(L));
  p.td.resize(static_cast<std::size_t>(L));
  p.bu.resize(static_cast<std::size_t>(L));
  for (std::int64_t i = 0; i < L; ++i) {
    p.lat[static_cast<std::size_t>(i)] = phi_lat[static_cast<std::size_t>(i)]->forward(pyr[static_cast<std::size_t>(i)]);
  }
  // Top-down from the deepest level, bottom-up from the shallowest.
  p.td.back() = p.lat.back();
  for (std::int64_t i = L - 2; i >= 0; --i) {
    const auto& target = pyr[static_cast<std::size_t>(i)];
    p.td[static_cast<std::size_t>(i)] =
        resize_to(phi_td[static_cast<std::size_t>(i)]->forward(p.td[static_cast<std::size_t>(i + 1)]),
                  target.size(2), target.size(3));
  }
  p.bu.front() = p.lat.front();
  for (std::int64_t i = 1; i < L; ++i) {
    const auto& target = pyr[static_cast<std::size_t>(i)];
    p.bu[static_cast<std::size_t>(i)] =
        resize_to(phi_bu[static_cast<std::size_t>(i - 1)]->forward(p.bu[static_cast<std::size_t>(i - 1)]),
                  target.size(2), target.size(3));
  }
  for (std::int64_t i = 0; i < L; ++i) {
    auto pooled = p.lat[static_cast<std::size_t>(i)].mean({2, 3});
    p.alpha.push_back(torch::softmax(se_head[static_cast<std::size_t>(i)]->forward(pooled), 1));
  }
  return p;
}

std::vector<torch::Tensor> FcmImpl::fuse_directions(const DirectionalPaths& paths) const {
  std::vector<torch::Tensor> fused;
  for (std::size_t i = 0; i < paths.lat.size(); ++i) {
    const auto a = paths.alpha[i].view({-1, 3, 1, 1, 1});
    fused.push_back(a.select(1, 0) * paths.td[i] + a.select(1, 1) * paths.bu[i] +
                    a.select(1, 2) * paths.lat[i]);
  }
  return fused;
}

CrossScaleState FcmImpl::cross_scale_communicate(const std::vector<torch::Tensor>& fused) {
  const auto L = levels();
  const auto ref = reference_level();
  const auto& ref_map = fused[static_cast<std::size_t>(ref)];
  const auto h = ref_map.size(2);
  const auto w = ref_map.size(3);

  CrossScaleState s;
  for (std::int64_t i = 0; i < L; ++i) {
    s.aligned.push_back(
        resize_to(align_proj[static_cast<std::size_t>(i)]->forward(fused[static_cast<std::size_t>(i)]), h, w));
  }
  if (L == 1) {
    s.w_att = torch::ones({ref_map.size(0), 1, h, w}, ref_map.options());
    s.enhanced_ref = s.aligned;
    return s;
  }
  s.w_att = torch::softmax(attention_head->forward(torch::cat(s.aligned, 1)), 1);
  for (std::int64_t i = 0; i < L; ++i) {
    std::vector<torch::Tensor> others;
    for (std::int64_t j = 0; j < L; ++j) {
      if (j != i) {
        others.push_back(s.aligned[static_cast<std::size_t>(j)]);
      }
    }
    auto other = phi_other[static_cast<std::size_t>(i)]->forward(torch::cat(others, 1));
    s.enhanced_ref.push_back(s.aligned[static_cast<std::size_t>(i)] +
                             gamma * (s.w_att.narrow(1, i, 1) * other));
  }
  return s;
}

FeaturePyramid FcmImpl::gate_and_inject(CrossScaleState& state, const FeaturePyramid& original) {
  FeaturePyramid out;
  state.routed.clear();
  state.gates.clear();
  for (std::size_t i = 0; i < original.size(); ++i) {
    const auto& f = original[i];
    auto r = route[i]->forward(resize_to(state.enhanced_ref[i], f.size(2), f.size(3)));
    TORCH_CHECK(r.sizes() == f.sizes(), "FCM: routed map shape ", r.sizes(),
                " does not match level ", i, " shape ", f.sizes());
    auto g = gate[i]->forward(r);
    out.push_back(f + g * r);
    state.routed.push_back(r);
    state.gates.push_back(g);
  }
  return out;
}

FeaturePyramid FcmImpl::forward(const FeaturePyramid& pyr) {
  auto paths = build_paths(pyr);
  auto state = cross_scale_communicate(fuse_directions(paths));
  return gate_and_inject(state, pyr);
}

}  // namespace mfcrf
