#include "uq/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>

namespace uq {

std::optional<Image> load_image(const std::filesystem::path& path, int resolution) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (raw.empty()) {
    return std::nullopt;
  }
  cv::Mat resized;
  cv::resize(raw, resized, cv::Size(resolution, resolution), 0, 0, cv::INTER_AREA);

  Image img(3, resolution, resolution);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const auto& bgr = resized.at<cv::Vec3b>(y, x);
      img.at(0, y, x) = bgr[2] / 255.0;
      img.at(1, y, x) = bgr[1] / 255.0;
      img.at(2, y, x) = bgr[0] / 255.0;
    }
  }
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  cv::Mat out(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto to_byte = [&](int c) {
        return static_cast<unsigned char>(
            std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0 + 0.5);
      };
      out.at<cv::Vec3b>(y, x) = cv::Vec3b(to_byte(2), to_byte(1), to_byte(0));
    }
  }
  if (!cv::imwrite(path.string(), out)) {
    throw IoError("failed to write image: " + path.string());
  }
}

}  // namespace uq
