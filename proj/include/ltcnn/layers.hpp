#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "ltcnn/rng.hpp"
#include "ltcnn/tensor.hpp"

namespace ltcnn {

enum class Mode { kTrain, kEval };

template <typename T>
struct ConvParamsT {
  TensorT<T> weights;  // [out_ch, in_ch, kh, kw]
  TensorT<T> bias;     // [out_ch]
};

template <typename T>
struct BatchNormStateT {
  TensorT<T> gamma;         // [C]
  TensorT<T> beta;          // [C]
  TensorT<T> running_mean;  // [C]
  TensorT<T> running_var;   // [C]
  T eps = T(1e-5);
  T momentum = T(0.1);  // running <- (1-momentum)*running + momentum*batch
};

template <typename T>
struct DenseParamsT {
  TensorT<T> weights;  // [out, in]
  TensorT<T> bias;     // [out]
};

using ConvParams = ConvParamsT<float>;
using BatchNormState = BatchNormStateT<float>;
using DenseParams = DenseParamsT<float>;

// Per-layer forward caches consumed by the matching backward.
template <typename T>
struct ConvContextT {
  TensorT<T> input;
};

template <typename T>
struct BatchNormContextT {
  TensorT<T> xhat;     // normalized input, same shape as x
  TensorT<T> inv_std;  // [C], 1/sqrt(var + eps) (batch stats in train mode)
  Mode mode = Mode::kTrain;
};

template <typename T>
struct ReluContextT {
  TensorT<T> input;
};

template <typename T>
struct PoolContextT {
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
struct DenseContextT {
  TensorT<T> input;
};

template <typename T>
struct DropoutContextT {
  TensorT<T> mask;  // 0 or 1/(1-rate); empty in eval mode / rate 0
};

// Valid (no padding) stride-1 cross-correlation:
// out[b,o,i,j] = bias[o] + sum_{c,u,v} x[b,c,i+u,j+v] * w[o,c,u,v]
template <typename T>
std::pair<TensorT<T>, ConvContextT<T>> conv2d_forward(const TensorT<T>& x,
                                                      const ConvParamsT<T>& p) {
  if (x.rank() != 4 || p.weights.rank() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and weights");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2),
                    w = x.dim(3);
  const std::size_t cout = p.weights.dim(0), kh = p.weights.dim(2),
                    kw = p.weights.dim(3);
  if (p.weights.dim(1) != cin) {
    throw std::invalid_argument(
        "conv2d: input has " + std::to_string(cin) + " channels but weights " +
        TensorT<T>::shape_str(p.weights.shape()) + " expect " +
        std::to_string(p.weights.dim(1)));
  }
  if (h < kh || w < kw)
    throw std::invalid_argument("conv2d: input " + TensorT<T>::shape_str(x.shape()) +
                                " smaller than kernel");
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  TensorT<T> out({batch, cout, oh, ow});
  const T* px = x.data();
  const T* pw = p.weights.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      const T bias = p.bias[o];
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          T acc = bias;
          for (std::size_t c = 0; c < cin; ++c) {
            const T* xrow = px + ((b * cin + c) * h + i) * w + j;
            const T* wrow = pw + ((o * cin + c) * kh) * kw;
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v)
                acc += xrow[u * w + v] * wrow[u * kw + v];
          }
          po[((b * cout + o) * oh + i) * ow + j] = acc;
        }
      }
    }
  }
  return {std::move(out), ConvContextT<T>{x}};
}

template <typename T>
std::tuple<TensorT<T>, TensorT<T>, TensorT<T>> conv2d_backward(
    const TensorT<T>& grad_out, const ConvContextT<T>& ctx,
    const ConvParamsT<T>& p) {
  const TensorT<T>& x = ctx.input;
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2),
                    w = x.dim(3);
  const std::size_t cout = p.weights.dim(0), kh = p.weights.dim(2),
                    kw = p.weights.dim(3);
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  if (grad_out.shape() !=
      std::vector<std::size_t>{batch, cout, oh, ow})
    throw std::invalid_argument("conv2d_backward: grad shape " +
                                TensorT<T>::shape_str(grad_out.shape()) +
                                " does not match forward context");
  TensorT<T> gx(x.shape());
  TensorT<T> gw(p.weights.shape());
  TensorT<T> gb(p.bias.shape());
  const T* pg = grad_out.data();
  const T* px = x.data();
  const T* pw = p.weights.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          const T g = pg[((b * cout + o) * oh + i) * ow + j];
          gb[o] += g;
          for (std::size_t c = 0; c < cin; ++c) {
            T* gxrow = gx.data() + ((b * cin + c) * h + i) * w + j;
            T* gwrow = gw.data() + ((o * cin + c) * kh) * kw;
            const T* xrow = px + ((b * cin + c) * h + i) * w + j;
            const T* wrow = pw + ((o * cin + c) * kh) * kw;
            for (std::size_t u = 0; u < kh; ++u) {
              for (std::size_t v = 0; v < kw; ++v) {
                gxrow[u * w + v] += g * wrow[u * kw + v];
                gwrow[u * kw + v] += g * xrow[u * w + v];
              }
            }
          }
        }
      }
    }
  }
  return {std::move(gx), std::move(gw), std::move(gb)};
}

// Train mode: normalize per channel by batch mean / biased batch variance,
// then scale by gamma and shift by beta; running stats updated as
// running <- (1-momentum)*running + momentum*batch.
// Eval mode: normalize with running stats; no state mutation.
template <typename T>
std::pair<TensorT<T>, BatchNormContextT<T>> batchnorm_forward(
    const TensorT<T>& x, BatchNormStateT<T>& s, Mode mode) {
  if (x.rank() != 4) throw std::invalid_argument("batchnorm: expected 4-d input");
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (s.gamma.size() != ch)
    throw std::invalid_argument("batchnorm: " + std::to_string(ch) +
                                " channels vs state of length " +
                                std::to_string(s.gamma.size()));
  const std::size_t per_channel = batch * h * w;
  if (mode == Mode::kTrain && per_channel < 2)
    throw std::invalid_argument(
        "batchnorm: train mode needs at least 2 values per channel");

  TensorT<T> out(x.shape());
  BatchNormContextT<T> ctx;
  ctx.mode = mode;
  ctx.xhat = TensorT<T>(x.shape());
  ctx.inv_std = TensorT<T>({ch});
  const std::size_t plane = h * w;
  for (std::size_t c = 0; c < ch; ++c) {
    T mean, var;
    if (mode == Mode::kTrain) {
      T sum = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / static_cast<T>(per_channel);
      T sq = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<T>(per_channel);
      s.running_mean[c] = (T(1) - s.momentum) * s.running_mean[c] + s.momentum * mean;
      s.running_var[c] = (T(1) - s.momentum) * s.running_var[c] + s.momentum * var;
    } else {
      mean = s.running_mean[c];
      var = s.running_var[c];
    }
    const T inv = T(1) / std::sqrt(var + s.eps);
    ctx.inv_std[c] = inv;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = x.data() + (b * ch + c) * plane;
      T* ph = ctx.xhat.data() + (b * ch + c) * plane;
      T* po = out.data() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        ph[i] = (p[i] - mean) * inv;
        po[i] = s.gamma[c] * ph[i] + s.beta[c];
      }
    }
  }
  return {std::move(out), std::move(ctx)};
}

// Gradient of the train-mode forward, through the batch statistics:
// dx = gamma*inv_std * (dy - mean(dy) - xhat * mean(dy*xhat))
template <typename T>
std::tuple<TensorT<T>, TensorT<T>, TensorT<T>> batchnorm_backward(
    const TensorT<T>& grad_out, const BatchNormContextT<T>& ctx,
    const BatchNormStateT<T>& s) {
  if (ctx.mode != Mode::kTrain)
    throw std::invalid_argument("batchnorm_backward: context is from an eval-mode forward");
  detail::require_same_shape(grad_out, ctx.xhat, "batchnorm_backward");
  const std::size_t batch = grad_out.dim(0), ch = grad_out.dim(1);
  const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
  const std::size_t per_channel = batch * plane;
  TensorT<T> gx(grad_out.shape());
  TensorT<T> ggamma({ch});
  TensorT<T> gbeta({ch});
  for (std::size_t c = 0; c < ch; ++c) {
    T sum_g = 0, sum_gx = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* pg = grad_out.data() + (b * ch + c) * plane;
      const T* ph = ctx.xhat.data() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += pg[i];
        sum_gx += pg[i] * ph[i];
      }
    }
    gbeta[c] = sum_g;
    ggamma[c] = sum_gx;
    const T mean_g = sum_g / static_cast<T>(per_channel);
    const T mean_gx = sum_gx / static_cast<T>(per_channel);
    const T scale = s.gamma[c] * ctx.inv_std[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const T* pg = grad_out.data() + (b * ch + c) * plane;
      const T* ph = ctx.xhat.data() + (b * ch + c) * plane;
      T* px = gx.data() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        px[i] = scale * (pg[i] - mean_g - ph[i] * mean_gx);
    }
  }
  return {std::move(gx), std::move(ggamma), std::move(gbeta)};
}

template <typename T>
std::pair<TensorT<T>, ReluContextT<T>> relu_forward(const TensorT<T>& x) {
  TensorT<T> out = max_with_scalar(x, T(0));
  return {std::move(out), ReluContextT<T>{x}};
}

// Subgradient at exactly 0 is 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const ReluContextT<T>& ctx) {
  detail::require_same_shape(grad_out, ctx.input, "relu_backward");
  TensorT<T> gx(grad_out.shape());
  for (std::size_t i = 0; i < gx.size(); ++i)
    gx[i] = ctx.input[i] > T(0) ? grad_out[i] : T(0);
  return gx;
}

// 2x2 stride-2 max pooling, floor semantics (odd trailing rows/cols dropped).
// Ties break to the first element in row-major window order.
template <typename T>
std::pair<TensorT<T>, PoolContextT<T>> maxpool2x2_forward(const TensorT<T>& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2)
    throw std::invalid_argument("maxpool2x2: need 4-d input with H,W >= 2");
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  TensorT<T> out({batch, ch, oh, ow});
  PoolContextT<T> ctx;
  ctx.input_shape = x.shape();
  ctx.argmax.resize(out.size());
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const T* p = x.data() + bc * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (2 * i) * w + 2 * j;
        T best_v = p[best];
        const std::size_t cand[3] = {(2 * i) * w + 2 * j + 1,
                                     (2 * i + 1) * w + 2 * j,
                                     (2 * i + 1) * w + 2 * j + 1};
        for (std::size_t k = 0; k < 3; ++k) {
          if (p[cand[k]] > best_v) {
            best_v = p[cand[k]];
            best = cand[k];
          }
        }
        const std::size_t o = (bc * oh + i) * ow + j;
        out[o] = best_v;
        ctx.argmax[o] = bc * h * w + best;
      }
    }
  }
  return {std::move(out), std::move(ctx)};
}

template <typename T>
TensorT<T> maxpool2x2_backward(const TensorT<T>& grad_out,
                               const PoolContextT<T>& ctx) {
  if (grad_out.size() != ctx.argmax.size())
    throw std::invalid_argument("maxpool2x2_backward: grad does not match context");
  TensorT<T> gx(ctx.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o)
    gx[ctx.argmax[o]] += grad_out[o];
  return gx;
}

// out = x . W^T + b, x: [B, in], W: [out, in]
template <typename T>
std::pair<TensorT<T>, DenseContextT<T>> dense_forward(const TensorT<T>& x,
                                                      const DenseParamsT<T>& p) {
  if (x.rank() != 2 || x.dim(1) != p.weights.dim(1))
    throw std::invalid_argument("dense: input " + TensorT<T>::shape_str(x.shape()) +
                                " vs weights " +
                                TensorT<T>::shape_str(p.weights.shape()));
  const std::size_t batch = x.dim(0), in = x.dim(1), out_n = p.weights.dim(0);
  TensorT<T> out({batch, out_n});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_n; ++o) {
      T acc = p.bias[o];
      const T* xr = x.data() + b * in;
      const T* wr = p.weights.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
      out(b, o) = acc;
    }
  }
  return {std::move(out), DenseContextT<T>{x}};
}

template <typename T>
std::tuple<TensorT<T>, TensorT<T>, TensorT<T>> dense_backward(
    const TensorT<T>& grad_out, const DenseContextT<T>& ctx,
    const DenseParamsT<T>& p) {
  const std::size_t batch = ctx.input.dim(0), in = ctx.input.dim(1),
                    out_n = p.weights.dim(0);
  if (grad_out.shape() != std::vector<std::size_t>{batch, out_n})
    throw std::invalid_argument("dense_backward: grad shape mismatch");
  TensorT<T> gx({batch, in});
  TensorT<T> gw(p.weights.shape());
  TensorT<T> gb(p.bias.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const T* gr = grad_out.data() + b * out_n;
    const T* xr = ctx.input.data() + b * in;
    T* gxr = gx.data() + b * in;
    for (std::size_t o = 0; o < out_n; ++o) {
      const T g = gr[o];
      gb[o] += g;
      const T* wr = p.weights.data() + o * in;
      T* gwr = gw.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) {
        gxr[k] += g * wr[k];
        gwr[k] += g * xr[k];
      }
    }
  }
  return {std::move(gx), std::move(gw), std::move(gb)};
}

// Inverted dropout: zero with probability `rate`, scale survivors by
// 1/(1-rate); eval mode is the identity.
template <typename T>
std::pair<TensorT<T>, DropoutContextT<T>> dropout_forward(const TensorT<T>& x,
                                                          double rate, Mode mode,
                                                          Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " +
                                std::to_string(rate));
  DropoutContextT<T> ctx;
  if (mode == Mode::kEval || rate == 0.0) return {x, std::move(ctx)};
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  ctx.mask = TensorT<T>(x.shape());
  TensorT<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.next_double() >= rate ? scale : T(0);
    ctx.mask[i] = m;
    out[i] = x[i] * m;
  }
  return {std::move(out), std::move(ctx)};
}

template <typename T>
TensorT<T> dropout_backward(const TensorT<T>& grad_out,
                            const DropoutContextT<T>& ctx) {
  if (ctx.mask.empty()) return grad_out;
  return mul(grad_out, ctx.mask);
}

template <typename T>
struct SoftmaxLoss {
  T loss;
  TensorT<T> grad_logits;  // (probs - one_hot) / B
  TensorT<T> probs;
};

// Row-wise softmax with max subtraction; loss is the mean over the batch of
// -log p[b, label_b].
template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const TensorT<T>& logits,
                                     const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0))
    throw std::invalid_argument("softmax_cross_entropy: need [B,N] logits and B labels");
  const std::size_t batch = logits.dim(0), n = logits.dim(1);
  SoftmaxLoss<T> r;
  r.probs = TensorT<T>(logits.shape());
  r.grad_logits = TensorT<T>(logits.shape());
  T loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= n)
      throw std::invalid_argument("softmax_cross_entropy: label " +
                                  std::to_string(labels[b]) +
                                  " out of range [0," + std::to_string(n) + ")");
    const T* lr = logits.data() + b * n;
    T mx = lr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, lr[j]);
    T denom = 0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(lr[j] - mx);
    T* pr = r.probs.data() + b * n;
    for (std::size_t j = 0; j < n; ++j) pr[j] = std::exp(lr[j] - mx) / denom;
    loss += -(lr[labels[b]] - mx - std::log(denom));
    T* gr = r.grad_logits.data() + b * n;
    for (std::size_t j = 0; j < n; ++j)
      gr[j] = (pr[j] - (j == labels[b] ? T(1) : T(0))) / static_cast<T>(batch);
  }
  r.loss = loss / static_cast<T>(batch);
  return r;
}

}  // namespace ltcnn
