#include "mfcrf/metrics.hpp"

#include "mfcrf/error.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace mfcrf {
namespace {

void check_pair(const torch::Tensor& pred, const torch::Tensor& obs, const char* op) {
  if (!pred.sizes().equals(obs.sizes())) {
    std::ostringstream msg;
    msg << op << ": shape mismatch " << pred.sizes() << " vs " << obs.sizes();
    throw Error(msg.str());
  }
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void ThresholdSet::validate() const {
  if (thresholds.empty()) {
    throw Error("threshold set is empty");
  }
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) {
      throw Error("thresholds must be strictly increasing");
    }
  }
}

ThresholdSet threshold_preset(const std::string& spec) {
  static const std::map<std::string, std::vector<double>> presets = {
      {"sevir", {16, 74, 133, 160, 181, 219}},
      {"meteonet", {12, 18, 24, 32}},
      {"shanghai", {20, 30, 35, 40}},
      {"cikm", {20, 30, 35, 40}},
      {"synthetic", {0.2, 0.5}},
  };
  ThresholdSet out;
  if (spec.rfind("custom:", 0) == 0) {
    out.dataset_id = "custom";
    std::stringstream ss(spec.substr(7));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.thresholds.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw Error("bad custom threshold \"" + item + "\"");
      }
    }
  } else {
    const auto it = presets.find(spec);
    if (it == presets.end()) {
      throw Error("unknown threshold preset \"" + spec + "\"");
    }
    out.dataset_id = it->first;
    out.thresholds = it->second;
  }
  out.validate();
  return out;
}

ContingencyTable accumulate(const torch::Tensor& pred, const torch::Tensor& obs, double threshold) {
  check_pair(pred, obs, "accumulate");
  const auto p = pred.ge(threshold);
  const auto o = obs.ge(threshold);
  ContingencyTable t;
  t.tp = torch::logical_and(p, o).sum().item<std::int64_t>();
  t.fp = torch::logical_and(p, o.logical_not()).sum().item<std::int64_t>();
  t.fn = torch::logical_and(p.logical_not(), o).sum().item<std::int64_t>();
  t.tn = pred.numel() - t.tp - t.fp - t.fn;
  return t;
}

double csi(const ContingencyTable& t) {
  const auto denom = t.tp + t.fn + t.fp;
  return denom == 0 ? 0.0 : static_cast<double>(t.tp) / static_cast<double>(denom);
}

double hss(const ContingencyTable& t) {
  const double tp = static_cast<double>(t.tp);
  const double fp = static_cast<double>(t.fp);
  const double fn = static_cast<double>(t.fn);
  const double tn = static_cast<double>(t.tn);
  const double denom = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
  return denom == 0.0 ? 0.0 : 2.0 * (tp * tn - fn * fp) / denom;
}

double csi_m(const torch::Tensor& pred, const torch::Tensor& obs, const ThresholdSet& thresholds) {
  thresholds.validate();
  std::vector<double> scores;
  for (const auto th : thresholds.thresholds) {
    scores.push_back(csi(accumulate(pred, obs, th)));
  }
  return mean_of(scores);
}

double mse(const torch::Tensor& pred, const torch::Tensor& obs) {
  check_pair(pred, obs, "mse");
  if (pred.numel() == 0) {
    return 0.0;
  }
  const auto diff = pred.to(torch::kFloat64) - obs.to(torch::kFloat64);
  return diff.square().mean().item<double>();
}

MetricAccumulator::MetricAccumulator(ThresholdSet thresholds, std::int64_t lead_steps)
    : thresholds_(std::move(thresholds)), lead_steps_(lead_steps) {
  thresholds_.validate();
  if (lead_steps_ < 1) {
    throw Error("metric accumulator needs at least one lead step");
  }
  tables_.assign(thresholds_.thresholds.size(),
                 std::vector<ContingencyTable>(static_cast<std::size_t>(lead_steps_)));
  sq_err_.assign(static_cast<std::size_t>(lead_steps_), 0.0);
  count_.assign(static_cast<std::size_t>(lead_steps_), 0);
}

void MetricAccumulator::add(const torch::Tensor& pred_in, const torch::Tensor& obs_in) {
  check_pair(pred_in, obs_in, "MetricAccumulator::add");
  auto pred = pred_in.dim() == 3 ? pred_in.unsqueeze(0) : pred_in;
  auto obs = obs_in.dim() == 3 ? obs_in.unsqueeze(0) : obs_in;
  if (pred.dim() != 4 || pred.size(1) != lead_steps_) {
    throw Error("MetricAccumulator::add: expected N x K x H x W with K = " +
                std::to_string(lead_steps_));
  }
  pred = pred.to(torch::kFloat64);
  obs = obs.to(torch::kFloat64);
  const std::int64_t per_step = pred.size(0) * pred.size(2) * pred.size(3);

  for (std::size_t ti = 0; ti < thresholds_.thresholds.size(); ++ti) {
    const double th = thresholds_.thresholds[ti];
    const auto p = pred.ge(th);
    const auto o = obs.ge(th);
    const std::vector<std::int64_t> dims = {0, 2, 3};
    const auto tp = torch::logical_and(p, o).sum(dims);
    const auto fp = torch::logical_and(p, o.logical_not()).sum(dims);
    const auto fn = torch::logical_and(p.logical_not(), o).sum(dims);
    for (std::int64_t k = 0; k < lead_steps_; ++k) {
      ContingencyTable t;
      t.tp = tp[k].item<std::int64_t>();
      t.fp = fp[k].item<std::int64_t>();
      t.fn = fn[k].item<std::int64_t>();
      t.tn = per_step - t.tp - t.fp - t.fn;
      tables_[ti][static_cast<std::size_t>(k)] += t;
    }
  }
  const auto sq = (pred - obs).square().sum(std::vector<std::int64_t>{0, 2, 3});
  for (std::int64_t k = 0; k < lead_steps_; ++k) {
    sq_err_[static_cast<std::size_t>(k)] += sq[k].item<double>();
    count_[static_cast<std::size_t>(k)] += per_step;
  }
  samples_ += pred.size(0);
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  if (other.lead_steps_ != lead_steps_ || other.thresholds_.thresholds != thresholds_.thresholds) {
    throw Error("MetricAccumulator::merge: incompatible accumulators");
  }
  for (std::size_t ti = 0; ti < tables_.size(); ++ti) {
    for (std::size_t k = 0; k < tables_[ti].size(); ++k) {
      tables_[ti][k] += other.tables_[ti][k];
    }
  }
  for (std::size_t k = 0; k < sq_err_.size(); ++k) {
    sq_err_[k] += other.sq_err_[k];
    count_[k] += other.count_[k];
  }
  samples_ += other.samples_;
}

ContingencyTable MetricAccumulator::table(std::size_t threshold_index) const {
  ContingencyTable t;
  for (const auto& step : tables_.at(threshold_index)) {
    t += step;
  }
  return t;
}

const ContingencyTable& MetricAccumulator::table(std::size_t threshold_index,
                                                 std::int64_t step) const {
  return tables_.at(threshold_index).at(static_cast<std::size_t>(step));
}

double MetricAccumulator::mse() const {
  const double sq = std::accumulate(sq_err_.begin(), sq_err_.end(), 0.0);
  const auto n = std::accumulate(count_.begin(), count_.end(), std::int64_t{0});
  return n == 0 ? 0.0 : sq / static_cast<double>(n);
}

double MetricAccumulator::mse_at(std::int64_t step) const {
  const auto k = static_cast<std::size_t>(step);
  return count_.at(k) == 0 ? 0.0 : sq_err_[k] / static_cast<double>(count_[k]);
}

MetricsReport summarize(const MetricAccumulator& acc) {
  MetricsReport r;
  r.dataset_id = acc.thresholds().dataset_id;
  r.samples = acc.samples();
  r.lead_steps = acc.lead_steps();
  std::vector<double> csis;
  std::vector<double> hsss;
  for (std::size_t ti = 0; ti < acc.thresholds().thresholds.size(); ++ti) {
    ThresholdScores s;
    s.threshold = acc.thresholds().thresholds[ti];
    s.table = acc.table(ti);
    s.csi = csi(s.table);
    s.hss = hss(s.table);
    csis.push_back(s.csi);
    hsss.push_back(s.hss);
    r.per_threshold.push_back(s);
  }
  r.csi_m = mean_of(csis);
  r.hss = mean_of(hsss);
  r.mse = acc.mse();

  for (std::int64_t k = 0; k < acc.lead_steps(); ++k) {
    std::vector<double> c;
    std::vector<double> h;
    for (std::size_t ti = 0; ti < acc.thresholds().thresholds.size(); ++ti) {
      c.push_back(csi(acc.table(ti, k)));
      h.push_back(hss(acc.table(ti, k)));
    }
    r.lead_time.csi_m.push_back(mean_of(c));
    r.lead_time.hss.push_back(mean_of(h));
    r.lead_time.mse.push_back(acc.mse_at(k));
  }
  return r;
}

LeadTimeCurves lead_time_curves(const torch::Tensor& preds, const torch::Tensor& obs,
                                const ThresholdSet& thresholds) {
  check_pair(preds, obs, "lead_time_curves");
  const auto lead = preds.dim() == 4 ? preds.size(1) : preds.size(0);
  MetricAccumulator acc(thresholds, lead);
  acc.add(preds, obs);
  return summarize(acc).lead_time;
}

}  // namespace mfcrf
