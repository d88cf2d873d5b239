#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ltcnn/network.hpp"
#include "ltcnn/tensor.hpp"

namespace ltcnn {

// Decoded image: planar CHW float, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;  // channels * height * width

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
};

inline Image make_image(std::size_t h, std::size_t w, std::size_t c) {
  if (h == 0 || w == 0 || c == 0)
    throw std::invalid_argument("image: zero dimension");
  return Image{h, w, c, std::vector<float>(c * h * w, 0.0f)};
}

namespace detail {
// Bilinear fetch with replicate border.
inline float sample_bilinear(const Image& img, std::size_t c, double y, double x) {
  const double max_y = static_cast<double>(img.height - 1);
  const double max_x = static_cast<double>(img.width - 1);
  y = std::min(std::max(y, 0.0), max_y);
  x = std::min(std::max(x, 0.0), max_x);
  const std::size_t y0 = static_cast<std::size_t>(y);
  const std::size_t x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
  const double bot = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}
}  // namespace detail

// Bilinear resize, align-corners-false convention:
// src = (dst + 0.5) * in/out - 0.5.
inline Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (img.height == 0 || img.width == 0)
    throw std::invalid_argument("resize: empty image");
  Image out = make_image(out_h, out_w, img.channels);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x)
        out.at(c, y, x) = detail::sample_bilinear(
            img, c, (static_cast<double>(y) + 0.5) * sy - 0.5,
            (static_cast<double>(x) + 0.5) * sx - 0.5);
  return out;
}

inline Image hflip(const Image& img) {
  Image out = make_image(img.height, img.width, img.channels);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

// Rotation about the image center by `degrees`, bilinear sampling with
// replicate border. Inverse mapping, so angle 0 reproduces the input exactly.
inline Image rotate(const Image& img, double degrees) {
  const double rad = degrees * 3.141592653589793238462643383279502884 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = static_cast<double>(img.height - 1) / 2.0;
  const double cx = static_cast<double>(img.width - 1) / 2.0;
  Image out = make_image(img.height, img.width, img.channels);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double sy = cy + (-sn * dx + cs * dy);
        const double sx = cx + (cs * dx + sn * dy);
        out.at(c, y, x) = detail::sample_bilinear(img, c, sy, sx);
      }
    }
  }
  return out;
}

// Horizontal shear: source column = x - factor * (y - cy).
inline Image shear(const Image& img, double factor) {
  const double cy = static_cast<double>(img.height - 1) / 2.0;
  Image out = make_image(img.height, img.width, img.channels);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out.at(c, y, x) = detail::sample_bilinear(
            img, c, static_cast<double>(y),
            static_cast<double>(x) - factor * (static_cast<double>(y) - cy));
  return out;
}

// Resize to the spec's input dims, then map [0,1] -> [-1,1] per channel
// ((v - 0.5) / 0.5). Grayscale is replicated to the spec's channel count.
inline Tensor preprocess(const Image& img, const NetworkSpec& spec) {
  if (img.height == 0 || img.width == 0 || img.channels == 0)
    throw std::invalid_argument("preprocess: empty image");
  Image src = img;
  if (src.channels == 1 && spec.input_channels > 1) {
    Image rep = make_image(src.height, src.width, spec.input_channels);
    for (std::size_t c = 0; c < spec.input_channels; ++c)
      for (std::size_t i = 0; i < src.height * src.width; ++i)
        rep.data[c * src.height * src.width + i] = src.data[i];
    src = std::move(rep);
  }
  if (src.channels != spec.input_channels)
    throw std::invalid_argument("preprocess: image has " +
                                std::to_string(src.channels) +
                                " channels, spec wants " +
                                std::to_string(spec.input_channels));
  const Image resized =
      (src.height == spec.input_height && src.width == spec.input_width)
          ? src
          : resize_bilinear(src, spec.input_height, spec.input_width);
  Tensor out({spec.input_channels, spec.input_height, spec.input_width});
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (resized.data[i] - 0.5f) / 0.5f;
  return out;
}

// Rank-3 LTT1 tensors are treated as CHW intensity planes in [0,1];
// rank-2 as single-channel.
inline Image image_from_tensor(const Tensor& t) {
  if (t.rank() == 2) return Image{t.dim(0), t.dim(1), 1, t.vec()};
  if (t.rank() == 3) return Image{t.dim(1), t.dim(2), t.dim(0), t.vec()};
  throw std::invalid_argument("image tensor must be rank 2 or 3, got " +
                              Tensor::shape_str(t.shape()));
}

}  // namespace ltcnn
