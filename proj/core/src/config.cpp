#include "mfcrf/config.hpp"

#include "mfcrf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace mfcrf {

using nlohmann::json;

namespace {

const char* kVrwkvStages[] = {"encoder_tail", "bottleneck", "decoder_first"};

std::string alpha_mode_name(AlphaMode m) { return m == AlphaMode::kPixel ? "pixel" : "fixed"; }
std::string decay_scale_name(DecayScale d) { return d == DecayScale::kRaw ? "raw" : "per_length"; }
std::string injection_name(CondInjection c) {
  return c == CondInjection::kAdditive ? "additive" : "concat";
}
CondInjection parse_injection(const std::string& s) {
  if (s == "additive") return CondInjection::kAdditive;
  if (s == "concat") return CondInjection::kConcat;
  throw Error("model.cond_injection must be \"additive\" or \"concat\", got \"" + s + "\"");
}

// Reads keys from one config section, remembering which were consumed so leftovers can be
// reported as typos.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    node_ = &root.at(name_);
    if (!node_->is_object()) throw Error("config section \"" + name_ + "\" must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error("config key " + name_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& item : node_->items()) {
      if (seen_.count(item.key()) == 0) {
        throw Error("unknown config key " + name_ + "." + item.key());
      }
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

std::vector<std::int64_t> ModelConfig::widths() const {
  const auto c1 = std::max<std::int64_t>(
      4, 4 * static_cast<std::int64_t>(std::llround(base_width * width_multiplier / 4.0)));
  std::vector<std::int64_t> w;
  for (std::int64_t i = 0; i < levels && i < static_cast<std::int64_t>(channel_mult.size()); ++i) {
    w.push_back(c1 * channel_mult[static_cast<std::size_t>(i)]);
  }
  return w;
}

bool ModelConfig::vrwkv_at(const std::string& stage) const {
  return vrwkv.enabled &&
         std::find(vrwkv.stages.begin(), vrwkv.stages.end(), stage) != vrwkv.stages.end();
}

bool ModelConfig::cgstf_at(std::int64_t level) const {
  return cgstf.enabled &&
         std::find(cgstf.stages.begin(), cgstf.stages.end(), level) != cgstf.stages.end();
}

bool ModelConfig::wgsc_at(std::int64_t level) const {
  return wgsc.enabled && std::find(wgsc.skip_levels.begin(), wgsc.skip_levels.end(), level) !=
                             wgsc.skip_levels.end();
}

void ModelConfig::validate() const {
  if (levels < 2) throw Error("model.levels must be >= 2");
  if (base_width <= 0 || !(width_multiplier > 0.0)) {
    throw Error("model.base_width and model.width_multiplier must be positive");
  }
  if (static_cast<std::int64_t>(channel_mult.size()) != levels ||
      std::any_of(channel_mult.begin(), channel_mult.end(), [](auto m) { return m < 1; })) {
    throw Error("model.channel_mult must list one positive factor per level");
  }
  if (input_frames <= 0 || output_frames <= 0) {
    throw Error("model.input_frames and model.output_frames must be positive");
  }
  if (time_conditioning && (time_embed_dim <= 0 || time_embed_dim % 2 != 0)) {
    throw Error("model.time_embed_dim must be positive and even");
  }
  if (fcm.reference_level < 1 || fcm.reference_level > levels) {
    throw Error("fcm.reference_level must be in [1, levels]");
  }
  for (auto s : cgstf.stages) {
    if (s < 1 || s > levels) throw Error("cgstf.stages entries must be in [1, levels]");
  }
  if (cgstf.alpha_mode == AlphaMode::kFixed && !(cgstf.alpha_fixed > 0.0)) {
    throw Error("cgstf.alpha_fixed must be positive");
  }
  for (auto s : wgsc.skip_levels) {
    if (s < 1 || s > levels) throw Error("wgsc.skip_levels entries must be in [1, levels]");
  }
  if (wgsc.wavelet != "db4") throw Error("wgsc.wavelet: only \"db4\" is supported");
  for (const auto& s : vrwkv.stages) {
    if (std::find(std::begin(kVrwkvStages), std::end(kVrwkvStages), s) == std::end(kVrwkvStages)) {
      throw Error("vrwkv.stages: unknown stage \"" + s +
                  "\" (expected encoder_tail, bottleneck, decoder_first)");
    }
  }
  if (vrwkv.blocks_per_stage < 1) throw Error("vrwkv.blocks_per_stage must be >= 1");
  if (vrwkv.compression < 1 || vrwkv.shift < 0) throw Error("vrwkv compression/shift invalid");
  for (auto w : widths()) {
    if (w % 4 != 0) throw Error("model widths must be divisible by 4");
    if (vrwkv.enabled && (w / vrwkv.compression) < 1) throw Error("vrwkv.compression too large");
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error("train.lr must be positive");
  if (lr_min < 0.0 || lr_min > lr) throw Error("train.lr_min must be in [0, lr]");
  if (batch < 1) throw Error("train.batch must be >= 1");
  if (epochs < 1) throw Error("train.epochs must be >= 1");
  if (max_steps < 0) throw Error("train.max_steps must be >= 0");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw Error("train.ema_decay must be in (0, 1)");
  if (weight_decay < 0.0) throw Error("train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error("train.beta1/beta2 must be in [0, 1)");
  }
  if (grad_clip < 0.0) throw Error("train.grad_clip must be >= 0 (0 disables)");
  if (sampler_steps < 1) throw Error("train.sampler_steps must be >= 1");
}

void DataConfig::validate() const {
  if (image_size < 0 || image_size == 1) throw Error("data.image_size must be 0 or >= 2");
  if (stride < 1) throw Error("data.stride must be >= 1");
  if (!(train_fraction > 0.0) || val_fraction < 0.0 || train_fraction + val_fraction >= 1.0) {
    throw Error("data.train_fraction/val_fraction must leave a nonempty test share");
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
}

json to_json(const ModelConfig& c) {
  json j;
  j["model"] = {{"levels", c.levels},
                {"base_width", c.base_width},
                {"width_multiplier", c.width_multiplier},
                {"channel_mult", c.channel_mult},
                {"input_frames", c.input_frames},
                {"output_frames", c.output_frames},
                {"time_embed_dim", c.time_embed_dim},
                {"time_conditioning", c.time_conditioning},
                {"kan_mode", to_string(c.kan_mode)},
                {"cond_injection", injection_name(c.cond_injection)}};
  j["fcm"] = {{"enabled", c.fcm.enabled},
              {"reference_level", c.fcm.reference_level},
              {"gamma_init", c.fcm.gamma_init}};
  j["cgstf"] = {{"enabled", c.cgstf.enabled},
                {"stages", c.cgstf.stages},
                {"alpha_mode", alpha_mode_name(c.cgstf.alpha_mode)},
                {"alpha_fixed", c.cgstf.alpha_fixed}};
  j["wgsc"] = {{"enabled", c.wgsc.enabled},
               {"skip_levels", c.wgsc.skip_levels},
               {"wavelet", c.wgsc.wavelet},
               {"detach_dwt", c.wgsc.detach_dwt}};
  j["vrwkv"] = {{"enabled", c.vrwkv.enabled},
                {"stages", c.vrwkv.stages},
                {"blocks_per_stage", c.vrwkv.blocks_per_stage},
                {"decay_scale", decay_scale_name(c.vrwkv.decay_scale)},
                {"compression", c.vrwkv.compression},
                {"shift", c.vrwkv.shift}};
  return j;
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"lr_min", c.lr_min},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"ema_decay", c.ema_decay},
          {"seed", c.seed},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"grad_clip", c.grad_clip},
          {"sampler_steps", c.sampler_steps},
          {"val_seed", c.val_seed},
          {"log_every", c.log_every},
          {"checkpoint_every", c.checkpoint_every}};
}

json to_json(const DataConfig& c) {
  return {{"image_size", c.image_size},
          {"stride", c.stride},
          {"train_fraction", c.train_fraction},
          {"val_fraction", c.val_fraction},
          {"thresholds", c.thresholds},
          {"max_val_windows", c.max_val_windows}};
}

json to_json(const RunConfig& c) {
  json j = to_json(c.model);
  j["train"] = to_json(c.train);
  j["data"] = to_json(c.data);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("config root must be an object");
  static const std::set<std::string> sections{"model", "fcm", "cgstf", "wgsc",
                                              "vrwkv", "train", "data"};
  for (const auto& item : j.items()) {
    if (sections.count(item.key()) == 0) throw Error("unknown config section " + item.key());
  }
  RunConfig rc;
  auto& m = rc.model;
  {
    Section s(j, "model");
    std::string kan = to_string(m.kan_mode), inj = injection_name(m.cond_injection);
    s.get("levels", m.levels);
    s.get("base_width", m.base_width);
    s.get("width_multiplier", m.width_multiplier);
    s.get("channel_mult", m.channel_mult);
    s.get("input_frames", m.input_frames);
    s.get("output_frames", m.output_frames);
    s.get("time_embed_dim", m.time_embed_dim);
    s.get("time_conditioning", m.time_conditioning);
    s.get("kan_mode", kan);
    s.get("cond_injection", inj);
    s.finish();
    m.kan_mode = parse_kan_mode(kan);
    m.cond_injection = parse_injection(inj);
  }
  {
    Section s(j, "fcm");
    s.get("enabled", m.fcm.enabled);
    s.get("reference_level", m.fcm.reference_level);
    s.get("gamma_init", m.fcm.gamma_init);
    s.finish();
  }
  {
    Section s(j, "cgstf");
    std::string mode = alpha_mode_name(m.cgstf.alpha_mode);
    s.get("enabled", m.cgstf.enabled);
    s.get("stages", m.cgstf.stages);
    s.get("alpha_mode", mode);
    s.get("alpha_fixed", m.cgstf.alpha_fixed);
    s.finish();
    m.cgstf.alpha_mode = parse_alpha_mode(mode);
  }
  {
    Section s(j, "wgsc");
    s.get("enabled", m.wgsc.enabled);
    s.get("skip_levels", m.wgsc.skip_levels);
    s.get("wavelet", m.wgsc.wavelet);
    s.get("detach_dwt", m.wgsc.detach_dwt);
    s.finish();
  }
  {
    Section s(j, "vrwkv");
    std::string scale = decay_scale_name(m.vrwkv.decay_scale);
    s.get("enabled", m.vrwkv.enabled);
    s.get("stages", m.vrwkv.stages);
    s.get("blocks_per_stage", m.vrwkv.blocks_per_stage);
    s.get("decay_scale", scale);
    s.get("compression", m.vrwkv.compression);
    s.get("shift", m.vrwkv.shift);
    s.finish();
    m.vrwkv.decay_scale = parse_decay_scale(scale);
  }
  {
    auto& t = rc.train;
    Section s(j, "train");
    s.get("lr", t.lr);
    s.get("lr_min", t.lr_min);
    s.get("batch", t.batch);
    s.get("epochs", t.epochs);
    s.get("max_steps", t.max_steps);
    s.get("ema_decay", t.ema_decay);
    s.get("seed", t.seed);
    s.get("weight_decay", t.weight_decay);
    s.get("beta1", t.beta1);
    s.get("beta2", t.beta2);
    s.get("grad_clip", t.grad_clip);
    s.get("sampler_steps", t.sampler_steps);
    s.get("val_seed", t.val_seed);
    s.get("log_every", t.log_every);
    s.get("checkpoint_every", t.checkpoint_every);
    s.finish();
  }
  {
    auto& d = rc.data;
    Section s(j, "data");
    s.get("image_size", d.image_size);
    s.get("stride", d.stride);
    s.get("train_fraction", d.train_fraction);
    s.get("val_fraction", d.val_fraction);
    s.get("thresholds", d.thresholds);
    s.get("max_val_windows", d.max_val_windows);
    s.finish();
  }
  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("config file " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string fingerprint(const json& resolved) {
  const std::string text = resolved.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig preset_config(const std::string& name) {
  RunConfig rc;
  if (name == "toy") {
    rc.model.base_width = 16;
    rc.model.channel_mult = {1, 1, 2, 2};
    rc.model.input_frames = 5;
    rc.model.output_frames = 10;
    rc.model.time_embed_dim = 32;
    rc.train.lr = 3e-3;
    rc.data.image_size = 64;
  } else if (name == "paper") {
    rc.model.width_multiplier = 1.1;
    rc.model.input_frames = 5;
    rc.model.output_frames = 20;
    rc.train.epochs = 500;
    rc.data.image_size = 128;
    rc.data.thresholds = "sevir";
  } else if (name != "default") {
    throw Error("unknown preset \"" + name + "\" (expected default, toy, paper)");
  }
  rc.validate();
  return rc;
}

}  // namespace mfcrf
