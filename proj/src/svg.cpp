#include "lowrank/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "lowrank/errors.hpp"

namespace lowrank::svg {

namespace {

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::ofstream open(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

void write_line_chart(const std::string& path, const std::vector<Series>& series,
                      const ChartOptions& opts) {
  auto os = open(path);
  const double margin_l = 70, margin_r = 20, margin_t = 40, margin_b = 50;
  const double plot_w = opts.width - margin_l - margin_r;
  const double plot_h = opts.height - margin_t - margin_b;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      const double y = s.y[i];
      if (!std::isfinite(y)) continue;
      if (opts.log_y && y <= 0) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!std::isfinite(xmin)) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
  if (xmax == xmin) xmax = xmin + 1;
  if (opts.log_y) {
    ymin = std::log10(ymin);
    ymax = std::log10(ymax);
  }
  if (ymax == ymin) ymax = ymin + 1;

  auto px = [&](double x) { return margin_l + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) {
    const double v = opts.log_y ? std::log10(y) : y;
    return margin_t + (1.0 - (v - ymin) / (ymax - ymin)) * plot_h;
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width
     << "\" height=\"" << opts.height << "\">\n";
  os << "<!-- data (csv):\nseries,x,y\n";
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i)
      os << escape(s.label) << "," << num(s.x[i]) << "," << num(s.y[i]) << "\n";
  os << "-->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << opts.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"14\">"
     << escape(opts.title) << "</text>\n";

  // frame and ticks
  os << "<rect x=\"" << margin_l << "\" y=\"" << margin_t << "\" width=\"" << plot_w
     << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
  const int n_ticks = 5;
  for (int t = 0; t <= n_ticks; ++t) {
    const double fx = xmin + (xmax - xmin) * t / n_ticks;
    os << "<line x1=\"" << px(fx) << "\" y1=\"" << margin_t + plot_h << "\" x2=\""
       << px(fx) << "\" y2=\"" << margin_t + plot_h + 4 << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << px(fx) << "\" y=\"" << margin_t + plot_h + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << num(fx) << "</text>\n";
    const double fv = ymin + (ymax - ymin) * t / n_ticks;
    const double fy = margin_t + (1.0 - static_cast<double>(t) / n_ticks) * plot_h;
    os << "<line x1=\"" << margin_l - 4 << "\" y1=\"" << fy << "\" x2=\"" << margin_l
       << "\" y2=\"" << fy << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << margin_l - 8 << "\" y=\"" << fy + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << (opts.log_y ? "1e" + num(fv) : num(fv)) << "</text>\n";
  }
  os << "<text x=\"" << margin_l + plot_w / 2 << "\" y=\"" << opts.height - 8
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << escape(opts.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << margin_t + plot_h / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        "transform=\"rotate(-90 16 "
     << margin_t + plot_h / 2 << ")\">" << escape(opts.y_label) << "</text>\n";

  size_t color_idx = 0;
  double legend_y = margin_t + 14;
  for (const auto& s : series) {
    const std::string color = kPalette[color_idx++ % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      const double y = s.y[i];
      if (!std::isfinite(y) || (opts.log_y && y <= 0)) continue;
      os << num(px(s.x[i])) << "," << num(py(y)) << " ";
    }
    os << "\"/>\n";
    os << "<line x1=\"" << margin_l + plot_w - 130 << "\" y1=\"" << legend_y
       << "\" x2=\"" << margin_l + plot_w - 110 << "\" y2=\"" << legend_y
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << margin_l + plot_w - 104 << "\" y=\"" << legend_y + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(s.label)
       << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
}

namespace {

// simple blue -> white -> red map on [0,1]
std::string diverging_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    const double u = t / 0.5;
    r = static_cast<int>(30 + u * (255 - 30));
    g = static_cast<int>(60 + u * (255 - 60));
    b = 255;
  } else {
    const double u = (t - 0.5) / 0.5;
    r = 255;
    g = static_cast<int>(255 - u * (255 - 60));
    b = static_cast<int>(255 - u * (255 - 40));
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void write_heatmap(const std::string& path, const Eigen::MatrixXd& field,
                   const std::string& title, const std::vector<Overlay>& points) {
  auto os = open(path);
  const int cell = std::max(2, 400 / static_cast<int>(field.rows()));
  const int w = cell * static_cast<int>(field.cols());
  const int h = cell * static_cast<int>(field.rows());
  const double lo = field.minCoeff(), hi = field.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
     << h + 30 << "\">\n";
  os << "<!-- field range [" << num(lo) << ", " << num(hi) << "] -->\n";
  os << "<text x=\"" << w / 2 << "\" y=\"16\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"13\">"
     << escape(title) << "</text>\n";
  for (Eigen::Index j = 0; j < field.cols(); ++j)
    for (Eigen::Index i = 0; i < field.rows(); ++i) {
      // row i is drawn bottom-up so the picture matches the unit square
      const double t = (field(i, j) - lo) / span;
      os << "<rect x=\"" << j * cell << "\" y=\""
         << 30 + (field.rows() - 1 - i) * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"" << diverging_color(t) << "\"/>\n";
    }
  for (const auto& p : points)
    os << "<circle cx=\"" << p.x * w << "\" cy=\"" << 30 + (1.0 - p.y) * h
       << "\" r=\"3\" fill=\"" << p.color << "\"/>\n";
  os << "</svg>\n";
}

void write_scene(const std::string& path, const std::vector<Segment>& segments,
                 const std::vector<CircleMark>& circles, const std::string& title) {
  auto os = open(path);
  const int size = 480;
  // unit square mapped into the middle of the canvas with margin for the
  // acquisition circle outside it
  const double scale = size / 2.4;
  auto mx = [&](double x) { return (x + 0.7) * scale; };
  auto my = [&](double y) { return size - (y + 0.7) * scale + 30; };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\""
     << size + 30 << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << size / 2 << "\" y=\"16\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"13\">"
     << escape(title) << "</text>\n";
  os << "<rect x=\"" << mx(0) << "\" y=\"" << my(1) << "\" width=\"" << scale
     << "\" height=\"" << scale << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (const auto& s : segments)
    os << "<line x1=\"" << mx(s.x0) << "\" y1=\"" << my(s.y0) << "\" x2=\"" << mx(s.x1)
       << "\" y2=\"" << my(s.y1) << "\" stroke=\"" << s.color << "\" stroke-width=\""
       << s.width << "\"/>\n";
  for (const auto& c : circles)
    os << "<circle cx=\"" << mx(c.x) << "\" cy=\"" << my(c.y) << "\" r=\""
       << c.r * scale << "\" fill=\"" << (c.fill ? c.color : std::string("none"))
       << "\" stroke=\"" << c.color << "\"/>\n";
  os << "</svg>\n";
}

}  // namespace lowrank::svg
