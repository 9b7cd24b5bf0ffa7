#pragma once

#include "mfcrf/cgstf.hpp"
#include "mfcrf/kan.hpp"
#include "mfcrf/vrwkv.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mfcrf {

enum class CondInjection { kAdditive, kConcat };

struct FcmConfig {
  bool enabled = true;
  std::int64_t reference_level = 2;  // 1-based; level 2 is H/2 x W/2
  double gamma_init = 0.0;
};

struct CgstfConfig {
  bool enabled = true;
  std::vector<std::int64_t> stages{1, 2, 3};  // 1-based encoder levels
  AlphaMode alpha_mode = AlphaMode::kPixel;
  double alpha_fixed = 0.1;
};

struct WgscConfig {
  bool enabled = true;
  std::vector<std::int64_t> skip_levels{3, 4};
  std::string wavelet = "db4";
  bool detach_dwt = true;
};

struct VrwkvConfig {
  bool enabled = true;
  std::vector<std::string> stages{"encoder_tail", "bottleneck", "decoder_first"};
  std::int64_t blocks_per_stage = 1;
  DecayScale decay_scale = DecayScale::kRaw;
  std::int64_t compression = 4;
  std::int64_t shift = 1;
};

struct ModelConfig {
  std::int64_t levels = 4;
  std::int64_t base_width = 32;
  double width_multiplier = 1.0;
  std::vector<std::int64_t> channel_mult{1, 2, 4, 8};  // C_i = C_1 * channel_mult[i - 1]
  std::int64_t input_frames = 5;   // J
  std::int64_t output_frames = 20; // K
  std::int64_t time_embed_dim = 64;
  bool time_conditioning = true;
  KanMode kan_mode = KanMode::kSpline;
  CondInjection cond_injection = CondInjection::kAdditive;
  FcmConfig fcm;
  CgstfConfig cgstf;
  WgscConfig wgsc;
  VrwkvConfig vrwkv;

  /// C_i for i = 1..levels: C_1 is base_width * width_multiplier rounded to a multiple of 4,
  /// scaled per level by channel_mult.
  std::vector<std::int64_t> widths() const;
  bool vrwkv_at(const std::string& stage) const;
  bool cgstf_at(std::int64_t level) const;  // 1-based
  bool wgsc_at(std::int64_t level) const;   // 1-based

  void validate() const;
};

struct TrainConfig {
  double lr = 1e-4;
  double lr_min = 0.0;
  std::int64_t batch = 8;
  std::int64_t epochs = 50;
  std::int64_t max_steps = 0;  // 0: run all epochs
  double ema_decay = 0.95;
  std::uint64_t seed = 0;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double grad_clip = 1.0;
  std::int64_t sampler_steps = 5;
  std::uint64_t val_seed = 1234;
  std::int64_t log_every = 10;
  std::int64_t checkpoint_every = 0;  // steps; 0: only at epoch end

  void validate() const;
};

struct DataConfig {
  std::int64_t image_size = 0;  // 0: keep native size
  std::int64_t stride = 1;
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  std::string thresholds = "synthetic";
  std::int64_t max_val_windows = 0;  // 0: all

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const DataConfig& c);
nlohmann::json to_json(const RunConfig& c);

/// Missing keys take their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// FNV-1a 64 of the canonical (sorted-key) dump, as 16 hex digits.
std::string fingerprint(const nlohmann::json& resolved);

/// Named presets: "toy" (base width 16, J=5, K=10) and "paper" (full-scale widths).
RunConfig preset_config(const std::string& name);

}  // namespace mfcrf
