#include "mfcrf/trainer.hpp"

#include "mfcrf/report.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace mfcrf {

namespace {

WindowTensors gather(const std::vector<SequenceWindow>& windows,
                     const std::vector<std::int64_t>& indices) {
  if (indices.empty()) return {};
  auto [cond, target] = stack_windows(windows, indices);
  return {cond, target};
}

std::string format_halt(std::int64_t step, double lr, double loss, double grad_norm) {
  std::ostringstream os;
  os << "training halted: non-finite value at step " << step << " (lr " << lr << ", loss "
     << loss << ", grad-norm " << grad_norm << ")";
  return os.str();
}

torch::Tensor bytes_to_tensor(const std::string& bytes) {
  auto t = torch::empty({static_cast<std::int64_t>(bytes.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), bytes.data(), bytes.size());
  return t;
}

std::string tensor_to_bytes(const torch::Tensor& t) {
  const auto c = t.contiguous();
  return std::string(reinterpret_cast<const char*>(c.data_ptr<std::uint8_t>()),
                     static_cast<std::size_t>(c.numel()));
}

// Copies named tensors into the module, requiring an exact name and shape match.
void load_named(const std::map<std::string, torch::Tensor>& source,
                const torch::OrderedDict<std::string, torch::Tensor>& target, const char* kind) {
  torch::NoGradGuard no_grad;
  if (source.size() != target.size()) {
    throw Error(std::string("checkpoint has ") + std::to_string(source.size()) + " " + kind +
                ", model expects " + std::to_string(target.size()));
  }
  for (const auto& item : target) {
    auto it = source.find(item.key());
    if (it == source.end()) throw Error(std::string("checkpoint is missing ") + kind + " " + item.key());
    if (!it->second.sizes().equals(item.value().sizes())) {
      throw Error(std::string("checkpoint ") + kind + " " + item.key() + " has shape mismatch");
    }
    item.value().copy_(it->second);
  }
}

// Parameters swapped to EMA values for the guard's lifetime.
class EmaSwap {
 public:
  EmaSwap(const EmaState& ema, std::vector<torch::Tensor> params) : params_(std::move(params)) {
    torch::NoGradGuard no_grad;
    for (const auto& p : params_) backup_.push_back(p.detach().clone());
    ema_copy_to(ema, params_);
  }
  ~EmaSwap() {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].copy_(backup_[i]);
  }
  EmaSwap(const EmaSwap&) = delete;
  EmaSwap& operator=(const EmaSwap&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> backup_;
};

}  // namespace

PreparedData prepare_data(const DatasetWindows& windows, const DataConfig& config) {
  const auto n = static_cast<std::int64_t>(windows.windows.size());
  const double test_fraction = 1.0 - config.train_fraction - config.val_fraction;
  const auto split =
      chronological_split(n, {config.train_fraction, config.val_fraction, test_fraction});
  PreparedData d;
  d.train = gather(windows.windows, split.train);
  auto val = split.val;
  if (config.max_val_windows > 0 && static_cast<std::int64_t>(val.size()) > config.max_val_windows) {
    val.resize(static_cast<std::size_t>(config.max_val_windows));
  }
  d.val = gather(windows.windows, val);
  d.test = gather(windows.windows, split.test);
  d.native_range = windows.native_range;
  d.dataset_id = windows.dataset_id;
  return d;
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr, double lr_min) {
  if (total <= 1) return lr;
  const double progress = static_cast<double>(std::min(step, total - 1)) /
                          static_cast<double>(total - 1);
  return lr_min + (lr - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

torch::Generator make_generator(std::uint64_t seed) {
  return at::detail::createCPUGenerator(seed);
}

TrainingHalted::TrainingHalted(std::int64_t step_, double lr_, double loss_, double grad_norm_)
    : Error(format_halt(step_, lr_, loss_, grad_norm_)),
      step(step_),
      lr(lr_),
      loss(loss_),
      grad_norm(grad_norm_) {}

Trainer::Trainer(const RunConfig& config, PreparedData data)
    : cfg_(config), data_(std::move(data)), gen_(make_generator(config.train.seed)) {
  cfg_.validate();
  resolved_ = to_json(cfg_);
  thresholds_ = threshold_preset(cfg_.data.thresholds);
  if (data_.train.size() == 0) throw Error("training split is empty");
  const auto& m = cfg_.model;
  if (data_.train.condition.size(1) != m.input_frames ||
      data_.train.target.size(1) != m.output_frames) {
    throw Error("data windows have J=" + std::to_string(data_.train.condition.size(1)) +
                ", K=" + std::to_string(data_.train.target.size(1)) + " but the model expects J=" +
                std::to_string(m.input_frames) + ", K=" + std::to_string(m.output_frames));
  }

  torch::manual_seed(cfg_.train.seed);
  model_ = VelocityNet(m);
  model_->train();

  // Weight decay applies to matrices and kernels; vectors (biases, norm affine terms, gains)
  // are exempt.
  std::vector<torch::Tensor> decay, no_decay;
  for (const auto& p : model_->parameters()) (p.dim() > 1 ? decay : no_decay).push_back(p);
  auto make_opts = [&](double wd) {
    return std::make_unique<torch::optim::AdamWOptions>(
        torch::optim::AdamWOptions(cfg_.train.lr)
            .betas({cfg_.train.beta1, cfg_.train.beta2})
            .weight_decay(wd));
  };
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(decay, make_opts(cfg_.train.weight_decay));
  groups.emplace_back(no_decay, make_opts(0.0));
  optimizer_ = std::make_unique<torch::optim::AdamW>(
      groups, torch::optim::AdamWOptions(cfg_.train.lr).weight_decay(0.0));
  ema_ = make_ema(model_->parameters(), cfg_.train.ema_decay);
}

std::int64_t Trainer::steps_per_epoch() const {
  return (data_.train.size() + cfg_.train.batch - 1) / cfg_.train.batch;
}

std::int64_t Trainer::total_steps() const {
  return cfg_.train.max_steps > 0 ? cfg_.train.max_steps : cfg_.train.epochs * steps_per_epoch();
}

double Trainer::lr_at(std::int64_t step) const {
  return cosine_lr(step, total_steps(), cfg_.train.lr, cfg_.train.lr_min);
}

void Trainer::set_lr(double lr) {
  for (auto& group : optimizer_->param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }
}

StepRecord Trainer::step() {
  const auto n = data_.train.size();
  if (!permutation_.defined() || cursor_ >= n) {
    permutation_ = torch::randperm(n, gen_, torch::kLong);
    cursor_ = 0;
  }
  const auto b = std::min(cfg_.train.batch, n - cursor_);
  const auto idx = permutation_.narrow(0, cursor_, b);
  cursor_ += b;

  const auto cond = data_.train.condition.index_select(0, idx);
  const auto target = data_.train.target.index_select(0, idx);
  const auto sample = draw_interpolant(target, gen_);

  StepRecord rec;
  rec.lr = lr_at(step_);
  set_lr(rec.lr);
  optimizer_->zero_grad();
  auto loss = rf_loss(model_->forward(sample.x_t, sample.t, cond), sample);
  loss.backward();
  rec.loss = loss.item<double>();
  const double max_norm =
      cfg_.train.grad_clip > 0.0 ? cfg_.train.grad_clip : std::numeric_limits<double>::infinity();
  rec.grad_norm = torch::nn::utils::clip_grad_norm_(model_->parameters(), max_norm);
  if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm)) {
    throw TrainingHalted(step_ + 1, rec.lr, rec.loss, rec.grad_norm);
  }
  optimizer_->step();
  ema_update(ema_, model_->parameters());

  ++step_;
  rec.step = step_;
  rec.epoch_end = cursor_ >= n;
  if (rec.epoch_end) ++epoch_;
  rec.epoch = epoch_;
  return rec;
}

double Trainer::validate() {
  const auto& val = data_.val.size() > 0 ? data_.val : data_.train;
  EmaSwap swap(ema_, model_->parameters());
  model_->eval();
  const auto pred = sample_forecasts(model_, val.condition,
                                     static_cast<int>(cfg_.train.sampler_steps),
                                     cfg_.train.val_seed, cfg_.train.batch);
  model_->train();
  return evaluate_forecasts(pred, val.target, data_.native_range, thresholds_).csi_m;
}

void Trainer::save_to(const std::filesystem::path& path) const {
  save_checkpoint(path, checkpoint());
}

void Trainer::run(const TrainHooks& hooks) {
  const bool write = !hooks.out_dir.empty();
  if (write) std::filesystem::create_directories(hooks.out_dir);
  while (!finished()) {
    StepRecord rec;
    try {
      rec = step();
    } catch (const TrainingHalted& halt) {
      if (write) {
        nlohmann::json dump{{"step", halt.step},
                            {"lr", halt.lr},
                            {"loss", std::isfinite(halt.loss) ? nlohmann::json(halt.loss)
                                                              : nlohmann::json(std::to_string(halt.loss))},
                            {"grad_norm", std::isfinite(halt.grad_norm)
                                              ? nlohmann::json(halt.grad_norm)
                                              : nlohmann::json(std::to_string(halt.grad_norm))}};
        std::ofstream(hooks.out_dir / "halt.json") << dump.dump(2) << "\n";
      }
      throw;
    }
    if (hooks.on_step) hooks.on_step(rec);
    if (rec.epoch_end || finished()) {
      EpochRecord er;
      er.epoch = rec.epoch_end ? epoch_ : epoch_ + 1;
      er.val_csi_m = validate();
      val_history_.push_back(er.val_csi_m);
      er.improved = er.val_csi_m > best_csi_m_;
      if (er.improved) best_csi_m_ = er.val_csi_m;
      er.best_csi_m = best_csi_m_;
      if (write) {
        if (er.improved) save_to(hooks.out_dir / "best.ckpt");
        save_to(hooks.out_dir / "last.ckpt");
      }
      if (hooks.on_epoch) hooks.on_epoch(er);
    } else if (write && cfg_.train.checkpoint_every > 0 &&
               step_ % cfg_.train.checkpoint_every == 0) {
      save_to(hooks.out_dir / "last.ckpt");
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = resolved_;
  c.fingerprint = fingerprint(resolved_);
  for (const auto& item : model_->named_parameters()) c.parameters[item.key()] = item.value().detach().clone();
  for (const auto& item : model_->named_buffers()) c.buffers[item.key()] = item.value().detach().clone();
  for (const auto& s : ema_.shadow) c.ema_shadow.push_back(s.clone());
  c.ema_decay = ema_.decay;
  {
    std::ostringstream os;
    torch::serialize::OutputArchive archive;
    optimizer_->save(archive);
    archive.save_to(os);
    c.optimizer_state = bytes_to_tensor(os.str());
  }
  c.rng_state = gen_.get_state().clone();
  if (permutation_.defined()) c.permutation = permutation_.clone();
  c.cursor = cursor_;
  c.step = step_;
  c.epoch = epoch_;
  c.best_csi_m = best_csi_m_;
  c.val_history = val_history_;
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (c.fingerprint != fingerprint(resolved_)) {
    throw Error("checkpoint config fingerprint " + c.fingerprint +
                " does not match the run config " + fingerprint(resolved_));
  }
  load_named(c.parameters, model_->named_parameters(), "parameters");
  load_named(c.buffers, model_->named_buffers(), "buffers");
  if (c.ema_shadow.size() != ema_.shadow.size()) throw Error("checkpoint EMA size mismatch");
  {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < ema_.shadow.size(); ++i) ema_.shadow[i].copy_(c.ema_shadow[i]);
  }
  ema_.decay = c.ema_decay;
  {
    std::istringstream is(tensor_to_bytes(c.optimizer_state));
    torch::serialize::InputArchive archive;
    archive.load_from(is);
    optimizer_->load(archive);
  }
  gen_.set_state(c.rng_state);
  permutation_ = c.permutation.defined() ? c.permutation.clone() : torch::Tensor();
  cursor_ = c.cursor;
  step_ = c.step;
  epoch_ = c.epoch;
  best_csi_m_ = c.best_csi_m;
  val_history_ = c.val_history;
}

VelocityNet model_from_checkpoint(const Checkpoint& ckpt, bool use_ema,
                                  const std::string& expected_fingerprint) {
  if (!expected_fingerprint.empty() && expected_fingerprint != ckpt.fingerprint) {
    throw Error("config fingerprint " + expected_fingerprint + " does not match checkpoint " +
                ckpt.fingerprint);
  }
  const auto cfg = run_config_from_json(ckpt.config);
  VelocityNet net(cfg.model);
  load_named(ckpt.parameters, net->named_parameters(), "parameters");
  load_named(ckpt.buffers, net->named_buffers(), "buffers");
  if (use_ema) {
    if (ckpt.ema_shadow.size() != net->parameters().size()) {
      throw Error("checkpoint EMA size mismatch");
    }
    ema_copy_to(EmaState{ckpt.ema_decay, ckpt.ema_shadow}, net->parameters());
  }
  net->eval();
  return net;
}

torch::Tensor sample_forecasts(VelocityNet& model, const torch::Tensor& condition, int steps,
                               std::uint64_t seed, std::int64_t batch) {
  torch::NoGradGuard no_grad;
  const auto N = condition.size(0);
  const auto K = model->config().output_frames;
  auto gen = make_generator(seed);
  const auto z0 = at::normal(0.0, 1.0, {N, K, condition.size(2), condition.size(3)}, gen,
                             condition.options());
  std::vector<torch::Tensor> outs;
  for (std::int64_t s = 0; s < N; s += batch) {
    const auto b = std::min(batch, N - s);
    const auto enhanced = model->enhance_condition(model->encode_condition(condition.narrow(0, s, b)));
    VelocityFn v = [&](const torch::Tensor& z, double t, const torch::Tensor&) {
      return model->velocity_enhanced(z, torch::full({z.size(0)}, t, z.options()), enhanced);
    };
    outs.push_back(euler_sample(v, z0.narrow(0, s, b), torch::Tensor(), SamplerConfig{steps}));
  }
  return torch::cat(outs, 0).clamp(0.0, 1.0);
}

torch::Tensor persistence_forecast(const torch::Tensor& condition, std::int64_t K) {
  const auto last = condition.narrow(1, condition.size(1) - 1, 1);
  return last.expand({condition.size(0), K, condition.size(2), condition.size(3)}).contiguous();
}

MetricsReport evaluate_forecasts(const torch::Tensor& forecast, const torch::Tensor& target,
                                 const ValueRange& native_range, const ThresholdSet& thresholds) {
  if (forecast.sizes() != target.sizes()) throw Error("forecast and target shapes differ");
  MetricAccumulator acc(thresholds, target.size(1));
  acc.add(denormalize(forecast, native_range), denormalize(target, native_range));
  return summarize(acc);
}

}  // namespace mfcrf
