#include "flownorm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "flownorm/types.hpp"

namespace flownorm {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70, kMarginRight = 160, kMarginTop = 50, kMarginBottom = 55;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else out += c;
  }
  return out;
}

struct Canvas {
  std::FILE* f;

  void open(const std::string& path, const std::string& metadata = "") {
    f = std::fopen(path.c_str(), "w");
    if (!f) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
    std::fprintf(f,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                 "viewBox=\"0 0 %d %d\">\n<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
                 kWidth, kHeight, kWidth, kHeight, kWidth, kHeight);
    if (!metadata.empty()) std::fprintf(f, "<desc>%s</desc>\n", xml_escape(metadata).c_str());
  }
  void close() {
    std::fprintf(f, "</svg>\n");
    std::fclose(f);
  }
  void text(double x, double y, const std::string& s, const char* anchor = "middle",
            int size = 13) {
    std::fprintf(f,
                 "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"%d\" "
                 "text-anchor=\"%s\">%s</text>\n",
                 x, y, size, anchor, s.c_str());
  }
  void line(double x1, double y1, double x2, double y2, const char* color = "#333",
            double w = 1.0) {
    std::fprintf(f,
                 "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                 "stroke-width=\"%.1f\"/>\n",
                 x1, y1, x2, y2, color, w);
  }
};

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series, const std::string& metadata) {
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = std::numeric_limits<double>::infinity(), max_y = -min_y;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
  }
  if (!std::isfinite(min_x)) { min_x = 0; max_x = 1; min_y = 0; max_y = 1; }
  if (max_x == min_x) max_x = min_x + 1;
  if (max_y == min_y) max_y = min_y + 1;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto sx = [&](double x) { return kMarginLeft + (x - min_x) / (max_x - min_x) * plot_w; };
  auto sy = [&](double y) { return kMarginTop + plot_h - (y - min_y) / (max_y - min_y) * plot_h; };

  Canvas c;
  c.open(path, metadata);
  c.text(kMarginLeft + plot_w / 2, 25, title, "middle", 15);
  c.line(kMarginLeft, kMarginTop, kMarginLeft, kMarginTop + plot_h);
  c.line(kMarginLeft, kMarginTop + plot_h, kMarginLeft + plot_w, kMarginTop + plot_h);
  for (int i = 0; i <= 4; ++i) {
    const double xv = min_x + (max_x - min_x) * i / 4.0;
    const double yv = min_y + (max_y - min_y) * i / 4.0;
    c.line(sx(xv), kMarginTop + plot_h, sx(xv), kMarginTop + plot_h + 4);
    c.text(sx(xv), kMarginTop + plot_h + 18, fmt_tick(xv), "middle", 11);
    c.line(kMarginLeft - 4, sy(yv), kMarginLeft, sy(yv));
    c.text(kMarginLeft - 8, sy(yv) + 4, fmt_tick(yv), "end", 11);
  }
  c.text(kMarginLeft + plot_w / 2, kHeight - 12, x_label);
  std::fprintf(c.f,
               "<text x=\"18\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"13\" "
               "text-anchor=\"middle\" transform=\"rotate(-90 18 %.1f)\">%s</text>\n",
               kMarginTop + plot_h / 2, kMarginTop + plot_h / 2, y_label.c_str());

  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % std::size(kPalette)];
    std::fprintf(c.f, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"2\" points=\"",
                 color);
    for (auto [x, y] : series[si].points) std::fprintf(c.f, "%.1f,%.1f ", sx(x), sy(y));
    std::fprintf(c.f, "\"/>\n");
    for (auto [x, y] : series[si].points) {
      std::fprintf(c.f, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", sx(x),
                   sy(y), color);
    }
    const double ly = kMarginTop + 16.0 * si;
    c.line(kWidth - kMarginRight + 12, ly, kWidth - kMarginRight + 34, ly, color, 2.5);
    c.text(kWidth - kMarginRight + 40, ly + 4, series[si].label, "start", 11);
  }
  c.close();
}

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& series_labels,
                         const std::vector<SvgBarGroup>& groups, const std::string& metadata) {
  double max_y = 0.0;
  for (const auto& g : groups)
    for (double v : g.values) max_y = std::max(max_y, v);
  if (max_y <= 0.0) max_y = 1.0;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const size_t n_series = series_labels.size();
  const double group_w = plot_w / std::max<size_t>(1, groups.size());
  const double bar_w = 0.8 * group_w / std::max<size_t>(1, n_series);

  Canvas c;
  c.open(path, metadata);
  c.text(kMarginLeft + plot_w / 2, 25, title, "middle", 15);
  c.line(kMarginLeft, kMarginTop, kMarginLeft, kMarginTop + plot_h);
  c.line(kMarginLeft, kMarginTop + plot_h, kMarginLeft + plot_w, kMarginTop + plot_h);
  for (int i = 0; i <= 4; ++i) {
    const double yv = max_y * i / 4.0;
    const double y = kMarginTop + plot_h - yv / max_y * plot_h;
    c.line(kMarginLeft - 4, y, kMarginLeft, y);
    c.text(kMarginLeft - 8, y + 4, fmt_tick(yv), "end", 11);
  }

  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const double gx = kMarginLeft + gi * group_w + 0.1 * group_w;
    for (size_t si = 0; si < groups[gi].values.size() && si < n_series; ++si) {
      const double v = groups[gi].values[si];
      const double h = v / max_y * plot_h;
      std::fprintf(c.f,
                   "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                   gx + si * bar_w, kMarginTop + plot_h - h, bar_w, h,
                   kPalette[si % std::size(kPalette)]);
    }
    c.text(kMarginLeft + gi * group_w + group_w / 2, kMarginTop + plot_h + 18,
           groups[gi].label, "middle", 11);
  }
  for (size_t si = 0; si < n_series; ++si) {
    const double ly = kMarginTop + 16.0 * si;
    std::fprintf(c.f, "<rect x=\"%.1f\" y=\"%.1f\" width=\"14\" height=\"10\" fill=\"%s\"/>\n",
                 kWidth - kMarginRight + 12.0, ly - 8, kPalette[si % std::size(kPalette)]);
    c.text(kWidth - kMarginRight + 32, ly + 1, series_labels[si], "start", 11);
  }
  c.close();
}

}  // namespace flownorm
