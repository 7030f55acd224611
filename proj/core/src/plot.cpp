#include "dcpnet/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dcpnet/errors.hpp"

namespace dcpnet {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 60, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

void header(std::ostream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
}

void axes(std::ostream& os, double lo, double hi) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = y0 - (y0 - y1) * i / 4.0;
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
}

std::pair<double, double> range_of(const std::vector<double>& v, bool from_zero) {
  double lo = from_zero ? 0.0 : INFINITY, hi = from_zero ? 0.0 : -INFINITY;
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  return {lo, hi};
}

void save(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write plot " + path);
  out << text;
}

}  // namespace

void write_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::vector<Series>& series) {
  std::vector<double> all;
  std::size_t n = 0;
  for (const auto& s : series) {
    all.insert(all.end(), s.values.begin(), s.values.end());
    n = std::max(n, s.values.size());
  }
  auto [lo, hi] = range_of(all, false);
  std::ostringstream os;
  header(os, title);
  axes(os, lo, hi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto px = [&](std::size_t i) { return n <= 1 ? (x0 + x1) / 2 : x0 + (x1 - x0) * static_cast<double>(i) / (n - 1); };
  auto py = [&](double v) { return y0 - (y0 - y1) * (v - lo) / (hi - lo); };
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
     << " (1.." << n << ")</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      if (!std::isfinite(series[k].values[i])) continue;
      os << num(px(i)) << "," << num(py(series[k].values[i])) << " ";
    }
    os << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(k) + 10;
    os << "<rect x=\"" << x1 + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"3\" fill=\"" << color << "\"/>"
       << "<text x=\"" << x1 + 30 << "\" y=\"" << ly - 4 << "\">" << escape(series[k].name) << "</text>\n";
  }
  os << "</svg>\n";
  save(path, os.str());
}

void write_bar_plot(const std::string& path, const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<double>& values, const std::vector<double>& errors) {
  if (labels.size() != values.size() || (!errors.empty() && errors.size() != values.size())) {
    throw ArgumentError("write_bar_plot: labels, values and errors must align");
  }
  std::vector<double> tops = values;
  for (std::size_t i = 0; i < errors.size(); ++i) tops[i] += errors[i];
  auto [lo, hi] = range_of(tops, true);
  std::ostringstream os;
  header(os, title);
  axes(os, lo, hi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto py = [&](double v) { return y0 - (y0 - y1) * (v - lo) / (hi - lo); };
  const double slot = values.empty() ? 0.0 : (x1 - x0) / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double cx = x0 + slot * (static_cast<double>(i) + 0.5);
    const double w = slot * 0.6;
    os << "<rect x=\"" << num(cx - w / 2) << "\" y=\"" << num(py(values[i])) << "\" width=\"" << num(w)
       << "\" height=\"" << num(y0 - py(values[i])) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
    if (!errors.empty() && errors[i] > 0) {
      os << "<line x1=\"" << num(cx) << "\" y1=\"" << num(py(values[i] - errors[i])) << "\" x2=\"" << num(cx)
         << "\" y2=\"" << num(py(values[i] + errors[i])) << "\" stroke=\"black\"/>\n";
    }
    os << "<text x=\"" << num(cx) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << escape(labels[i]) << "</text>\n"
       << "<text x=\"" << num(cx) << "\" y=\"" << num(py(values[i]) - 4) << "\" text-anchor=\"middle\" font-size=\"10\">"
       << num(values[i]) << "</text>\n";
  }
  os << "</svg>\n";
  save(path, os.str());
}

}  // namespace dcpnet
