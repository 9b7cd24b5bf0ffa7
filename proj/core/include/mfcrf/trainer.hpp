#pragma once

#include "mfcrf/checkpoint.hpp"
#include "mfcrf/config.hpp"
#include "mfcrf/data.hpp"
#include "mfcrf/error.hpp"
#include "mfcrf/metrics.hpp"
#include "mfcrf/model.hpp"
#include "mfcrf/rectified_flow.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

namespace mfcrf {

/// Normalized window tensors: condition (N, J, H, W) and target (N, K, H, W).
struct WindowTensors {
  torch::Tensor condition;
  torch::Tensor target;

  std::int64_t size() const { return condition.defined() ? condition.size(0) : 0; }
};

struct PreparedData {
  WindowTensors train, val, test;
  ValueRange native_range;
  std::string dataset_id;
};

/// Chronological train/val/test split of the windows, stacked into tensors.
PreparedData prepare_data(const DatasetWindows& windows, const DataConfig& config);

/// Half-cosine from lr to lr_min over `total` steps; step total - 1 lands exactly on lr_min.
double cosine_lr(std::int64_t step, std::int64_t total, double lr, double lr_min);

torch::Generator make_generator(std::uint64_t seed);

class TrainingHalted : public Error {
 public:
  TrainingHalted(std::int64_t step, double lr, double loss, double grad_norm);
  std::int64_t step;
  double lr, loss, grad_norm;
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based index of the step just taken
  std::int64_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  bool epoch_end = false;
};

struct EpochRecord {
  std::int64_t epoch = 0;  // 1-based
  double val_csi_m = 0.0;
  double best_csi_m = 0.0;
  bool improved = false;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  std::filesystem::path out_dir;  // empty: no files written
};

class Trainer {
 public:
  Trainer(const RunConfig& config, PreparedData data);

  /// Draws the next batch and interpolants, takes one optimizer step and updates the EMA.
  StepRecord step();
  /// CSI-M of EMA-weight forecasts on the validation split, fixed sampler and noise seed.
  double validate();
  /// Runs to completion, validating per epoch and keeping the best checkpoint.
  void run(const TrainHooks& hooks = {});

  bool finished() const { return step_ >= total_steps(); }
  std::int64_t steps_per_epoch() const;
  std::int64_t total_steps() const;
  std::int64_t steps_taken() const { return step_; }
  std::int64_t epochs_completed() const { return epoch_; }
  double best_csi_m() const { return best_csi_m_; }
  double lr_at(std::int64_t step) const;

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

  VelocityNet& model() { return model_; }
  const EmaState& ema() const { return ema_; }
  const RunConfig& config() const { return cfg_; }
  const PreparedData& data() const { return data_; }

 private:
  void set_lr(double lr);
  void save_to(const std::filesystem::path& path) const;

  RunConfig cfg_;
  nlohmann::json resolved_;
  PreparedData data_;
  ThresholdSet thresholds_;
  VelocityNet model_{nullptr};
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  EmaState ema_;
  torch::Generator gen_;
  torch::Tensor permutation_;
  std::int64_t cursor_ = 0;
  std::int64_t step_ = 0;
  std::int64_t epoch_ = 0;
  double best_csi_m_ = -1.0;
  std::vector<double> val_history_;
};

/// Rebuilds the model from a checkpoint, with EMA weights by default. Rejects a checkpoint
/// whose config fingerprint differs from `expected_fingerprint` when one is given.
VelocityNet model_from_checkpoint(const Checkpoint& ckpt, bool use_ema = true,
                                  const std::string& expected_fingerprint = "");

/// Euler forecasts for every condition window, clipped to [0, 1]. Noise for all windows is drawn
/// up front from `seed`, so results do not depend on `batch`.
torch::Tensor sample_forecasts(VelocityNet& model, const torch::Tensor& condition, int steps,
                               std::uint64_t seed, std::int64_t batch = 8);

/// Repeats the last observed frame K times.
torch::Tensor persistence_forecast(const torch::Tensor& condition, std::int64_t K);

/// Scores normalized forecasts against normalized targets after mapping both to native units.
MetricsReport evaluate_forecasts(const torch::Tensor& forecast, const torch::Tensor& target,
                                 const ValueRange& native_range, const ThresholdSet& thresholds);

}  // namespace mfcrf
