#pragma once

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>

#include <opencv2/imgcodecs.hpp>

#include "ltcnn/image.hpp"
#include "ltcnn/tensor.hpp"

namespace ltcnn {

inline std::string lower_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline bool is_supported_image_file(const std::string& path) {
  const std::string ext = lower_ext(path);
  return ext == "png" || ext == "jpg" || ext == "jpeg" || ext == "ltt1";
}

// PNG/JPEG via OpenCV (alpha dropped, grayscale promoted to 3 channels,
// BGR -> RGB); .ltt1 files are read as CHW float planes.
inline Image load_image(const std::string& path) {
  if (lower_ext(path) == "ltt1") return image_from_tensor(load_ltt1(path));
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty())
    throw std::runtime_error("cannot decode image file: " + path);
  Image img = make_image(static_cast<std::size_t>(bgr.rows),
                         static_cast<std::size_t>(bgr.cols), 3);
  for (std::size_t y = 0; y < img.height; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < img.width; ++x) {
      img.at(0, y, x) = static_cast<float>(row[x][2]) / 255.0f;
      img.at(1, y, x) = static_cast<float>(row[x][1]) / 255.0f;
      img.at(2, y, x) = static_cast<float>(row[x][0]) / 255.0f;
    }
  }
  return img;
}

inline void save_png(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("save_png: need 1 or 3 channels");
  cv::Mat mat(static_cast<int>(img.height), static_cast<int>(img.width),
              img.channels == 3 ? CV_8UC3 : CV_8UC1);
  auto quantize = [](float v) {
    const float c = std::min(std::max(v, 0.0f), 1.0f);
    return static_cast<unsigned char>(std::lround(c * 255.0f));
  };
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      if (img.channels == 3) {
        mat.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x)) =
            cv::Vec3b(quantize(img.at(2, y, x)), quantize(img.at(1, y, x)),
                      quantize(img.at(0, y, x)));
      } else {
        mat.at<unsigned char>(static_cast<int>(y), static_cast<int>(x)) =
            quantize(img.at(0, y, x));
      }
    }
  }
  if (!cv::imwrite(path, mat))
    throw std::runtime_error("save_png: write failed for " + path);
}

}  // namespace ltcnn
