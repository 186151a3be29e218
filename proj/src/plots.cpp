#include "uq/plots.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstdio>

namespace uq {

void plot_line(const std::vector<Scalar>& xs, const std::vector<Scalar>& ys,
               const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::filesystem::path& path) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw InvalidArgument("plot_line: need equally sized, non-empty series");
  }
  const int w = 640, h = 480, margin = 60;
  cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));

  Scalar xmin = *std::min_element(xs.begin(), xs.end());
  Scalar xmax = *std::max_element(xs.begin(), xs.end());
  Scalar ymin = std::min(0.0, *std::min_element(ys.begin(), ys.end()));
  Scalar ymax = *std::max_element(ys.begin(), ys.end());
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;

  auto px = [&](Scalar x) {
    return margin + static_cast<int>((x - xmin) / (xmax - xmin) * (w - 2 * margin));
  };
  auto py = [&](Scalar y) {
    return h - margin - static_cast<int>((y - ymin) / (ymax - ymin) * (h - 2 * margin));
  };

  const cv::Scalar axis_color(60, 60, 60), line_color(180, 90, 20);
  cv::line(canvas, {margin, h - margin}, {w - margin, h - margin}, axis_color, 1);
  cv::line(canvas, {margin, h - margin}, {margin, margin}, axis_color, 1);

  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    cv::line(canvas, {px(xs[i]), py(ys[i])}, {px(xs[i + 1]), py(ys[i + 1])}, line_color, 2);
  }
  char buf[64];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cv::circle(canvas, {px(xs[i]), py(ys[i])}, 4, line_color, cv::FILLED);
    std::snprintf(buf, sizeof(buf), "%.4g", ys[i]);
    cv::putText(canvas, buf, {px(xs[i]) + 6, py(ys[i]) - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                axis_color, 1);
  }
  std::snprintf(buf, sizeof(buf), "%.4g", xmin);
  cv::putText(canvas, buf, {margin, h - margin + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              axis_color, 1);
  std::snprintf(buf, sizeof(buf), "%.4g", xmax);
  cv::putText(canvas, buf, {w - margin - 20, h - margin + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              axis_color, 1);
  cv::putText(canvas, title, {margin, margin - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
              axis_color, 1);
  cv::putText(canvas, xlabel, {w / 2 - 40, h - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              axis_color, 1);
  cv::putText(canvas, ylabel, {10, margin - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis_color,
              1);

  if (!cv::imwrite(path.string(), canvas)) {
    throw IoError("failed to write plot: " + path.string());
  }
}

}  // namespace uq
