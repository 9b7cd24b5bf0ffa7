#include "mfcrf/report.hpp"

#include "mfcrf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mfcrf {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << text;
}

}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.per_threshold) {
    rows.push_back({
        {"threshold", s.threshold},
        {"csi", s.csi},
        {"hss", s.hss},
        {"tp", s.table.tp},
        {"fp", s.table.fp},
        {"fn", s.table.fn},
        {"tn", s.table.tn},
    });
  }
  return {
      {"dataset_id", r.dataset_id},
      {"samples", r.samples},
      {"lead_steps", r.lead_steps},
      {"csi_m", r.csi_m},
      {"hss", r.hss},
      {"mse", r.mse},
      {"per_threshold", rows},
      {"lead_time", {{"csi_m", r.lead_time.csi_m}, {"hss", r.lead_time.hss}, {"mse", r.lead_time.mse}}},
  };
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.samples = j.at("samples").get<std::int64_t>();
    r.lead_steps = j.at("lead_steps").get<std::int64_t>();
    r.csi_m = j.at("csi_m").get<double>();
    r.hss = j.at("hss").get<double>();
    r.mse = j.at("mse").get<double>();
    for (const auto& row : j.at("per_threshold")) {
      ThresholdScores s;
      s.threshold = row.at("threshold").get<double>();
      s.csi = row.at("csi").get<double>();
      s.hss = row.at("hss").get<double>();
      s.table = {row.at("tp").get<std::int64_t>(), row.at("fp").get<std::int64_t>(),
                 row.at("fn").get<std::int64_t>(), row.at("tn").get<std::int64_t>()};
      r.per_threshold.push_back(s);
    }
    const auto& lt = j.at("lead_time");
    r.lead_time.csi_m = lt.at("csi_m").get<std::vector<double>>();
    r.lead_time.hss = lt.at("hss").get<std::vector<double>>();
    r.lead_time.mse = lt.at("mse").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed metrics report: ") + e.what());
  }
}

void write_metrics(const std::filesystem::path& path, const MetricsReport& report) {
  write_text(path, to_json(report).dump(2) + "\n");
}

MetricsReport read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return metrics_from_json(j);
}

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           double y_min, double y_max) {
  constexpr double width = 640, height = 400;
  constexpr double left = 64, right = 150, top = 40, bottom = 56;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  std::size_t n = 1;
  for (const auto& s : series) n = std::max(n, s.values.size());
  if (!(y_max > y_min)) y_max = y_min + 1.0;

  auto px = [&](std::size_t i) {
    return n == 1 ? left + pw / 2 : left + pw * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto py = [&](double v) {
    const double c = std::clamp((v - y_min) / (y_max - y_min), 0.0, 1.0);
    return top + ph * (1.0 - c);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = y_min + (y_max - y_min) * g / 4.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fmt(py(v), 2)
        << "\" y2=\"" << fmt(py(v), 2) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fmt(py(v) + 4, 2)
        << "\" text-anchor=\"end\">" << fmt(v, 2) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    svg << "<text x=\"" << fmt(px(i), 2) << "\" y=\"" << top + ph + 18
        << "\" text-anchor=\"middle\">" << i + 1 << "</text>\n";
  }
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 14
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  svg << "<text transform=\"translate(16," << top + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto* color = kPalette[si % std::size(kPalette)];
    const auto& s = series[si];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      svg << fmt(px(i), 2) << "," << fmt(py(s.values[i]), 2) << " ";
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      svg << "<circle cx=\"" << fmt(px(i), 2) << "\" cy=\"" << fmt(py(s.values[i]), 2)
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 14 + 18 * static_cast<double>(si);
    svg << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << ly
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_report(const MetricsReport& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_metrics(out_dir / "metrics.json", r);

  std::ostringstream md;
  md << "# Forecast verification: " << r.dataset_id << "\n\n";
  md << "Samples: " << r.samples << ", lead steps: " << r.lead_steps << "\n\n";
  md << "| CSI-M | HSS (mean) | MSE |\n|---|---|---|\n";
  md << "| " << fmt(r.csi_m) << " | " << fmt(r.hss) << " | " << fmt(r.mse) << " |\n\n";
  md << "| threshold | CSI | HSS | tp | fp | fn | tn |\n|---|---|---|---|---|---|---|\n";
  for (const auto& s : r.per_threshold) {
    md << "| " << fmt(s.threshold, 3) << " | " << fmt(s.csi) << " | " << fmt(s.hss) << " | "
       << s.table.tp << " | " << s.table.fp << " | " << s.table.fn << " | " << s.table.tn
       << " |\n";
  }
  md << "\n| lead step | CSI-M | HSS | MSE |\n|---|---|---|---|\n";
  for (std::size_t k = 0; k < r.lead_time.csi_m.size(); ++k) {
    md << "| " << k + 1 << " | " << fmt(r.lead_time.csi_m[k]) << " | " << fmt(r.lead_time.hss[k])
       << " | " << fmt(r.lead_time.mse.at(k)) << " |\n";
  }
  md << "\n![CSI-M by lead time](lead_time_csi_m.svg)\n![HSS by lead time](lead_time_hss.svg)\n"
     << "![CSI per threshold](per_threshold_csi.svg)\n";
  write_text(out_dir / "summary.md", md.str());

  write_text(out_dir / "lead_time_csi_m.svg",
             line_chart_svg("CSI-M by lead time", "lead step", "CSI-M",
                            {{"CSI-M", r.lead_time.csi_m}}, 0.0, 1.0));
  write_text(out_dir / "lead_time_hss.svg",
             line_chart_svg("HSS by lead time", "lead step", "HSS",
                            {{"HSS", r.lead_time.hss}}, -0.2, 1.0));
  std::vector<double> per;
  for (const auto& s : r.per_threshold) per.push_back(s.csi);
  write_text(out_dir / "per_threshold_csi.svg",
             line_chart_svg("CSI per threshold", "threshold index", "CSI", {{"CSI", per}}, 0.0,
                            1.0));
}

}  // namespace mfcrf
