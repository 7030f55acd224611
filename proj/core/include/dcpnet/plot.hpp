#pragma once

#include <string>
#include <vector>

namespace dcpnet {

struct Series {
  std::string name;
  std::vector<double> values;  // y at x = 1, 2, ...
};

/// Static SVG line chart, one polyline per series.
void write_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::vector<Series>& series);

/// Static SVG bar chart with optional symmetric error bars (empty = none).
void write_bar_plot(const std::string& path, const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<double>& values, const std::vector<double>& errors = {});

}  // namespace dcpnet
