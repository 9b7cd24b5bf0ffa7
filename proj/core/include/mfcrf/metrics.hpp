#pragma once

#include <torch/types.h>

#include <cstdint>
#include <string>
#include <vector>

namespace mfcrf {

/// Pooled 2x2 contingency counts at one threshold.
struct ContingencyTable {
  std::int64_t tp = 0;  // hits
  std::int64_t fp = 0;  // false alarms
  std::int64_t fn = 0;  // misses
  std::int64_t tn = 0;  // correct negatives

  std::int64_t total() const { return tp + fp + fn + tn; }

  ContingencyTable& operator+=(const ContingencyTable& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
  }
  friend ContingencyTable operator+(ContingencyTable a, const ContingencyTable& b) {
    return a += b;
  }
  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

struct ThresholdSet {
  std::string dataset_id;
  std::vector<double> thresholds;  // native units, strictly increasing

  void validate() const;
};

/// Presets: sevir, meteonet, shanghai, cikm, synthetic; or "custom:a,b,c".
ThresholdSet threshold_preset(const std::string& spec);

/// Binarizes both fields at >= threshold and counts every pixel of every frame.
ContingencyTable accumulate(const torch::Tensor& pred, const torch::Tensor& obs, double threshold);

double csi(const ContingencyTable& t);
double hss(const ContingencyTable& t);

double csi_m(const torch::Tensor& pred, const torch::Tensor& obs, const ThresholdSet& thresholds);

/// Mean squared error over every element, in the units of the inputs.
double mse(const torch::Tensor& pred, const torch::Tensor& obs);

/// Per-threshold pooled tables over a whole evaluation set; additive across batches.
class MetricAccumulator {
 public:
  MetricAccumulator(ThresholdSet thresholds, std::int64_t lead_steps);

  /// pred/obs: N x K x H x W (or K x H x W) in native units.
  void add(const torch::Tensor& pred, const torch::Tensor& obs);
  void merge(const MetricAccumulator& other);

  const ThresholdSet& thresholds() const { return thresholds_; }
  std::int64_t lead_steps() const { return lead_steps_; }
  /// Pooled over all lead steps.
  ContingencyTable table(std::size_t threshold_index) const;
  /// Pooled over the test set at one lead step only.
  const ContingencyTable& table(std::size_t threshold_index, std::int64_t step) const;
  double mse() const;
  double mse_at(std::int64_t step) const;
  std::int64_t samples() const { return samples_; }

 private:
  ThresholdSet thresholds_;
  std::int64_t lead_steps_;
  std::vector<std::vector<ContingencyTable>> tables_;  // [threshold][step]
  std::vector<double> sq_err_;                         // [step]
  std::vector<std::int64_t> count_;                    // [step]
  std::int64_t samples_ = 0;
};

struct ThresholdScores {
  double threshold = 0.0;
  ContingencyTable table;
  double csi = 0.0;
  double hss = 0.0;
};

struct LeadTimeCurves {
  std::vector<double> csi_m;
  std::vector<double> hss;  // mean over thresholds
  std::vector<double> mse;
};

struct MetricsReport {
  std::string dataset_id;
  std::int64_t samples = 0;
  std::int64_t lead_steps = 0;
  std::vector<ThresholdScores> per_threshold;
  double csi_m = 0.0;
  double hss = 0.0;  // mean over the threshold set
  double mse = 0.0;
  LeadTimeCurves lead_time;
};

MetricsReport summarize(const MetricAccumulator& acc);

/// preds/obs: N x K x H x W aligned on K. Each step pools over N only.
LeadTimeCurves lead_time_curves(const torch::Tensor& preds, const torch::Tensor& obs,
                                const ThresholdSet& thresholds);

}  // namespace mfcrf
