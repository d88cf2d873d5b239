#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "ltcnn/network.hpp"
#include "ltcnn/tensor.hpp"

namespace ltcnn {

struct SaliencyMap {
  Tensor values;  // [H, W], non-negative
  std::size_t target_class = 0;
};

// Vanilla gradient saliency: eval-mode forward, backprop the pre-softmax
// logit of the target class to the input, then take the channel-max of the
// absolute input gradient. target = nullopt picks the argmax logit (ties to
// the lowest index).
inline SaliencyMap saliency_map(Network& net, const Tensor& image,
                                std::optional<std::size_t> target = std::nullopt) {
  const NetworkSpec& s = net.spec;
  if (image.rank() != 3)
    throw std::invalid_argument("saliency: expected CxHxW image tensor, got " +
                                Tensor::shape_str(image.shape()));
  Tensor x = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  Rng rng(0);
  auto [logits, trace] = forward(net, x, Mode::kEval, rng);
  std::size_t cls;
  if (target) {
    if (*target >= s.n_classes)
      throw std::invalid_argument("saliency: target class " +
                                  std::to_string(*target) + " out of range");
    cls = *target;
  } else {
    cls = 0;
    for (std::size_t j = 1; j < s.n_classes; ++j)
      if (logits(std::size_t(0), j) > logits(std::size_t(0), cls)) cls = j;
  }
  Tensor grad_logits(logits.shape());
  grad_logits(std::size_t(0), cls) = 1.0f;
  Gradients g = backward(net, grad_logits, trace);

  SaliencyMap map;
  map.target_class = cls;
  map.values = Tensor({s.input_height, s.input_width});
  const std::size_t plane = s.input_height * s.input_width;
  for (std::size_t i = 0; i < plane; ++i) {
    float best = 0.0f;
    for (std::size_t c = 0; c < s.input_channels; ++c)
      best = std::max(best, std::fabs(g.input[c * plane + i]));
    map.values[i] = best;
  }
  return map;
}

// Min-max normalize to [0, 255] (a constant map goes to all zeros) and write
// binary PGM (P5, maxval 255).
inline void normalize_and_export(const SaliencyMap& map, const std::string& path) {
  float lo = map.values[0], hi = map.values[0];
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    lo = std::min(lo, map.values[i]);
    hi = std::max(hi, map.values[i]);
  }
  const float range = hi - lo;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("saliency: cannot open " + path);
  f << "P5\n" << map.values.dim(1) << " " << map.values.dim(0) << "\n255\n";
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const unsigned char v =
        range > 0.0f ? static_cast<unsigned char>(
                           std::lround((map.values[i] - lo) / range * 255.0f))
                     : 0;
    f.put(static_cast<char>(v));
  }
  if (!f) throw std::runtime_error("saliency: write failed for " + path);
}

}  // namespace ltcnn
