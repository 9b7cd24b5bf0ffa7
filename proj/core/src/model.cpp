#include "mfcrf/model.hpp"

#include "mfcrf/error.hpp"

#include <cmath>

namespace mfcrf {

torch::Tensor sinusoidal_embedding(const torch::Tensor& t, std::int64_t dim) {
  TORCH_CHECK(t.dim() == 1, "time embedding expects t of shape (B)");
  TORCH_CHECK(dim % 2 == 0, "time embedding dimension must be even");
  const auto half = dim / 2;
  const auto freqs =
      torch::exp(torch::arange(half, t.options()) * (-std::log(10000.0) / static_cast<double>(half)));
  const auto args = (t * 1000.0).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

EncoderImpl::EncoderImpl(std::int64_t in_channels, const std::vector<std::int64_t>& widths,
                         std::int64_t time_dim)
    : in_(in_channels) {
  TORCH_CHECK(!widths.empty(), "Encoder: no levels");
  stem = register_module("stem", Conv(in_channels, widths[0], 3));
  for (std::size_t i = 0; i < widths.size(); ++i) {
    blocks.push_back(register_module("block" + std::to_string(i + 1),
                                     ResBlock(widths[i], widths[i], time_dim)));
    if (i + 1 < widths.size()) {
      downs.push_back(register_module("down" + std::to_string(i + 1),
                                      Conv(ConvSpec{widths[i], widths[i + 1], 3, 2})));
    }
  }
}

FeaturePyramid EncoderImpl::forward(const torch::Tensor& x) {
  FeaturePyramid pyr;
  auto h = stem->forward(x);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    h = blocks[i]->forward(h);
    pyr.push_back(h);
    if (i < downs.size()) h = downs[i]->forward(h);
  }
  return pyr;
}

namespace {

torch::nn::Sequential vrwkv_stack(const ModelConfig& cfg, std::int64_t channels) {
  torch::nn::Sequential seq;
  VrwkvOptions o;
  o.channels = channels;
  o.compression = cfg.vrwkv.compression;
  o.shift = cfg.vrwkv.shift;
  o.decay_scale = cfg.vrwkv.decay_scale;
  for (std::int64_t b = 0; b < cfg.vrwkv.blocks_per_stage; ++b) seq->push_back(VrwkvBlock(o));
  return seq;
}

}  // namespace

VelocityNetImpl::VelocityNetImpl(const ModelConfig& config) : cfg_(config) {
  cfg_.validate();
  widths_ = cfg_.widths();
  const auto L = cfg_.levels;
  const auto K = cfg_.output_frames;
  auto C = [&](std::int64_t level) { return widths_[static_cast<std::size_t>(level - 1)]; };
  auto tag = [](const char* prefix, std::int64_t level) {
    return std::string(prefix) + std::to_string(level);
  };

  if (cfg_.time_conditioning) {
    const auto E = cfg_.time_embed_dim;
    time_dim_ = 4 * E;
    time_mlp = register_module(
        "time_mlp", torch::nn::Sequential(Dense(E, time_dim_), torch::nn::SiLU(),
                                          Dense(time_dim_, time_dim_)));
  }

  cond_encoder = register_module("cond_encoder", Encoder(cfg_.input_frames, widths_, 0));
  if (cfg_.fcm.enabled) {
    fcm = register_module("fcm", Fcm(FcmOptions{widths_, cfg_.fcm.reference_level - 1,
                                                cfg_.fcm.gamma_init}));
  }
  encoder = register_module("encoder", Encoder(K, widths_, time_dim_));

  for (auto level : cfg_.cgstf.stages) {
    if (cfg_.cgstf.enabled) {
      CgstfOptions o;
      o.main_channels = o.cond_channels = o.out_channels = C(level);
      o.alpha_mode = cfg_.cgstf.alpha_mode;
      o.alpha_fixed = cfg_.cgstf.alpha_fixed;
      cgstf.emplace(level, register_module(tag("cgstf", level), Cgstf(o)));
    } else {
      cond_fuse.emplace(level, register_module(tag("cond_fuse", level), Conv(2 * C(level), C(level), 1)));
    }
  }

  if (cfg_.vrwkv_at("encoder_tail")) {
    vrwkv_enc_tail = register_module("vrwkv_enc_tail", vrwkv_stack(cfg_, C(L)));
  }
  mid_block1 = register_module("mid_block1", ResBlock(C(L), C(L), time_dim_));
  if (cfg_.vrwkv_at("bottleneck")) {
    vrwkv_mid = register_module("vrwkv_mid", vrwkv_stack(cfg_, C(L)));
  }
  KanBlockOptions ko;
  ko.channels = C(L);
  ko.mode = cfg_.kan_mode;
  kan = register_module("kan", KanBlock(ko));
  mid_block2 = register_module("mid_block2", ResBlock(C(L), C(L), time_dim_));

  for (std::int64_t level = 1; level < L; ++level) {
    ups.push_back(register_module(tag("up", level), Conv(C(level + 1), C(level), 3)));
  }
  for (std::int64_t level = L; level >= 1; --level) {
    if (cfg_.wgsc_at(level)) {
      WgscOptions o;
      o.channels = C(level);
      o.detach_dwt = cfg_.wgsc.detach_dwt;
      wgsc.emplace(level, register_module(tag("wgsc", level), Wgsc(o)));
    } else if (cfg_.cond_injection == CondInjection::kConcat) {
      skip_fuse.emplace(level, register_module(tag("skip_fuse", level), Conv(3 * C(level), C(level), 3)));
    } else {
      skip_fuse.emplace(level, register_module(tag("skip_fuse", level), Conv(2 * C(level), C(level), 3)));
      cond_inject.emplace(level, register_module(tag("cond_inject", level), Conv(C(level), C(level), 1)));
    }
  }
  dec_blocks.resize(static_cast<std::size_t>(L), nullptr);
  for (std::int64_t level = L; level >= 1; --level) {
    dec_blocks[static_cast<std::size_t>(level - 1)] =
        register_module(tag("dec_block", level), ResBlock(C(level), C(level), time_dim_));
  }
  if (cfg_.vrwkv_at("decoder_first")) {
    vrwkv_dec_first = register_module("vrwkv_dec_first", vrwkv_stack(cfg_, C(L)));
  }
  head_norm = register_module("head_norm", torch::nn::GroupNorm(norm_groups(C(1)), C(1)));
  head = register_module("head", Conv(C(1), K, 3));
}

void VelocityNetImpl::trace(const std::string& stage, const torch::Tensor& x) {
  if (trace_ != nullptr) trace_->emplace_back(stage, x.sizes().vec());
}

FeaturePyramid VelocityNetImpl::encode_condition(const torch::Tensor& window) {
  TORCH_CHECK(window.dim() == 4, "condition window must be (B, J, H, W), got ", window.sizes());
  TORCH_CHECK(window.size(1) == cfg_.input_frames, "condition window has ", window.size(1),
              " frames, model expects J = ", cfg_.input_frames);
  return cond_encoder->forward(window);
}

FeaturePyramid VelocityNetImpl::enhance_condition(const FeaturePyramid& cond_pyr) {
  TORCH_CHECK(static_cast<std::int64_t>(cond_pyr.size()) == cfg_.levels,
              "condition pyramid has ", cond_pyr.size(), " levels, expected ", cfg_.levels);
  return fcm ? fcm->forward(cond_pyr) : cond_pyr;
}

torch::Tensor VelocityNetImpl::velocity_enhanced(const torch::Tensor& z_t, const torch::Tensor& t,
                                                 const FeaturePyramid& cond) {
  const auto L = cfg_.levels;
  TORCH_CHECK(z_t.dim() == 4 && z_t.size(1) == cfg_.output_frames, "z_t must be (B, ",
              cfg_.output_frames, ", H, W), got ", z_t.sizes());
  TORCH_CHECK(t.dim() == 1 && t.size(0) == z_t.size(0), "t must be (B) matching z_t");
  TORCH_CHECK(static_cast<std::int64_t>(cond.size()) == L, "condition pyramid level mismatch");
  for (std::int64_t i = 0; i < L; ++i) {
    TORCH_CHECK(cond[i].size(0) == z_t.size(0), "condition batch differs from z_t batch");
  }
  auto at = [&](std::int64_t level) { return cond[static_cast<std::size_t>(level - 1)]; };

  torch::Tensor temb;
  if (time_mlp) {
    temb = time_mlp->forward(sinusoidal_embedding(t.to(z_t.scalar_type()), cfg_.time_embed_dim));
  }

  std::vector<torch::Tensor> skips;
  auto h = encoder->stem->forward(z_t);
  for (std::int64_t level = 1; level <= L; ++level) {
    const auto i = static_cast<std::size_t>(level - 1);
    h = encoder->blocks[i]->forward(h, temb);
    TORCH_CHECK(h.sizes().slice(2) == at(level).sizes().slice(2), "condition level ", level,
                " is ", at(level).sizes(), " but backbone level is ", h.sizes());
    if (auto it = cgstf.find(level); it != cgstf.end()) {
      h = it->second->forward(h, at(level));
    } else if (auto jt = cond_fuse.find(level); jt != cond_fuse.end()) {
      h = jt->second->forward(torch::cat({h, at(level)}, 1));
    }
    if (level == L && vrwkv_enc_tail) h = vrwkv_enc_tail->forward(h);
    trace("encoder" + std::to_string(level), h);
    skips.push_back(h);
    if (i < encoder->downs.size()) h = encoder->downs[i]->forward(h);
  }

  h = mid_block1->forward(h, temb);
  if (vrwkv_mid) h = vrwkv_mid->forward(h);
  h = kan->forward(h);
  h = mid_block2->forward(h, temb);
  trace("bottleneck", h);

  for (std::int64_t level = L; level >= 1; --level) {
    const auto& skip = skips[static_cast<std::size_t>(level - 1)];
    if (level < L) {
      h = ups[static_cast<std::size_t>(level - 1)]->forward(resize_to(h, skip.size(2), skip.size(3)));
    }
    if (auto it = wgsc.find(level); it != wgsc.end()) {
      h = it->second->forward(skip, h, at(level));
    } else if (cfg_.cond_injection == CondInjection::kConcat) {
      h = skip_fuse.at(level)->forward(torch::cat({skip, h, at(level)}, 1));
    } else {
      h = skip_fuse.at(level)->forward(torch::cat({skip, h}, 1)) +
          cond_inject.at(level)->forward(at(level));
    }
    h = dec_blocks[static_cast<std::size_t>(level - 1)]->forward(h, temb);
    if (level == L && vrwkv_dec_first) h = vrwkv_dec_first->forward(h);
    trace("decoder" + std::to_string(level), h);
  }
  auto out = head->forward(torch::silu(head_norm->forward(h)));
  trace("head", out);
  return out;
}

torch::Tensor VelocityNetImpl::velocity_forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                                const FeaturePyramid& cond_pyr) {
  return velocity_enhanced(z_t, t, enhance_condition(cond_pyr));
}

torch::Tensor VelocityNetImpl::forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                       const torch::Tensor& window) {
  return velocity_forward(z_t, t, encode_condition(window));
}

std::int64_t count_parameters(torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) {
    if (p.requires_grad()) n += p.numel();
  }
  return n;
}

std::int64_t count_parameters(const ModelConfig& config) {
  VelocityNet net(config);
  return count_parameters(*net);
}

double estimate_gmacs(const ModelConfig& config, std::int64_t height, std::int64_t width) {
  torch::NoGradGuard no_grad;
  VelocityNet net(config);
  net->eval();
  const auto z = torch::zeros({1, config.output_frames, height, width});
  const auto cond = torch::zeros({1, config.input_frames, height, width});
  MacCounter counter;
  net->forward(z, torch::full({1}, 0.5), cond);
  return counter.macs() / 1e9;
}

nlohmann::json architecture_summary(const ModelConfig& config, std::int64_t height,
                                    std::int64_t width) {
  torch::NoGradGuard no_grad;
  VelocityNet net(config);
  net->eval();
  ShapeTrace shapes;
  net->set_trace(&shapes);
  {
    const auto z = torch::zeros({1, config.output_frames, height, width});
    const auto cond = torch::zeros({1, config.input_frames, height, width});
    const auto pyr = net->encode_condition(cond);
    for (std::size_t i = 0; i < pyr.size(); ++i) {
      shapes.emplace_back("condition" + std::to_string(i + 1), pyr[i].sizes().vec());
    }
    net->velocity_forward(z, torch::full({1}, 0.5), pyr);
  }
  net->set_trace(nullptr);

  nlohmann::json j;
  j["config"] = to_json(config);
  j["widths"] = net->widths();
  j["input"] = {{"z_t", {1, config.output_frames, height, width}},
                {"condition", {1, config.input_frames, height, width}}};
  auto& stages = j["stages"] = nlohmann::json::array();
  for (const auto& [name, shape] : shapes) stages.push_back({{"stage", name}, {"shape", shape}});
  auto& modules = j["parameters"] = nlohmann::json::object();
  for (const auto& child : net->named_children()) {
    modules[child.key()] = count_parameters(*child.value());
  }
  j["total_parameters"] = count_parameters(*net);
  return j;
}

}  // namespace mfcrf
