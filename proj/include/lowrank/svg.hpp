#ifndef LOWRANK_SVG_HPP
#define LOWRANK_SVG_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

namespace lowrank::svg {

// Minimal standalone SVG emitters for the experiment reports. Every chart
// embeds its data as a CSV comment so the figure is self-describing.

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 640;
  int height = 420;
};

void write_line_chart(const std::string& path, const std::vector<Series>& series,
                      const ChartOptions& opts);

// n x n field rendered as a colored cell grid (row 0 at the bottom), with
// optional overlay points given in unit-square coordinates.
struct Overlay {
  double x = 0, y = 0;
  std::string color = "#000000";
};

void write_heatmap(const std::string& path, const Eigen::MatrixXd& field,
                   const std::string& title,
                   const std::vector<Overlay>& points = {});

// Scene of line segments and circles in unit-square coordinates.
struct Segment {
  double x0, y0, x1, y1;
  std::string color = "#888888";
  double width = 0.5;
};
struct CircleMark {
  double x, y, r;
  std::string color = "#000000";
  bool fill = false;
};

void write_scene(const std::string& path, const std::vector<Segment>& segments,
                 const std::vector<CircleMark>& circles, const std::string& title);

}  // namespace lowrank::svg

#endif
