#pragma once

#include <string>
#include <vector>

namespace flownorm {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Minimal static charts for benchmark reports; no external tooling needed
// to look at results.
void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series,
                          const std::string& metadata = "");

struct SvgBarGroup {
  std::string label;                 // x-axis group label
  std::vector<double> values;        // one bar per series
};

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& series_labels,
                         const std::vector<SvgBarGroup>& groups,
                         const std::string& metadata = "");

}  // namespace flownorm
