#pragma once

#include "mfcrf/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mfcrf {

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

void write_metrics(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics(const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> values;
};

/// Static SVG line chart; x runs over 1..N.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           double y_min, double y_max);

/// Writes summary.md, metrics.json, lead_time_csi_m.svg, lead_time_hss.svg and
/// per_threshold_csi.svg into out_dir.
void write_report(const MetricsReport& report, const std::filesystem::path& out_dir);

}  // namespace mfcrf
