#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ltcnn/tensor.hpp"

namespace ltcnn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_element = 0;
  std::size_t n_checked = 0;
  bool passed = false;
};

// Central finite differences in 64-bit, h = 1e-3 by default. Relative error
// per element is |a - n| / max(|a|, |n|, 1e-8); the check passes iff the max
// over all elements is below `tolerance`.
//
// `loss` maps the tensors to a scalar; `analytic` holds one gradient tensor
// per input, in the same order. The loss must be evaluated in double, which
// is why this harness operates on TensorT<double> instantiations of the
// layer templates.
inline GradCheckReport gradient_check(
    const std::function<double(const std::vector<TensorT<double>>&)>& loss,
    std::vector<TensorT<double>> inputs,
    const std::vector<TensorT<double>>& analytic, double tolerance,
    double h = 1e-3) {
  GradCheckReport report;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double orig = inputs[t][i];
      inputs[t][i] = orig + h;
      const double up = loss(inputs);
      inputs[t][i] = orig - h;
      const double down = loss(inputs);
      inputs[t][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      const double denom =
          std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = t;
        report.worst_element = i;
      }
      ++report.n_checked;
    }
  }
  report.passed = report.max_rel_err < tolerance;
  return report;
}

// Weighted-sum scalarization of a layer output: L = sum_i out[i] * w[i] with
// fixed pseudo-random weights, so every output element contributes to the
// checked gradient.
inline TensorT<double> scalarization_weights(const std::vector<std::size_t>& shape,
                                             Rng& rng) {
  TensorT<double> w(shape);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  return w;
}

inline double weighted_sum(const TensorT<double>& out,
                           const TensorT<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

}  // namespace ltcnn
