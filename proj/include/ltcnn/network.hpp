#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ltcnn/layers.hpp"
#include "ltcnn/rng.hpp"
#include "ltcnn/tensor.hpp"

namespace ltcnn {

// Declarative description of the lightweight architecture:
// Conv(5x5,6)->BN->ReLU->Pool, Conv(5x5,16)->BN->ReLU->Pool,
// Flatten, FC(120)->Dropout, FC(84)->Dropout, FC(N), Softmax.
// The defaults give the 224x224 / 44,944-flatten configuration; the spec is
// parametric in input size and class count.
struct NetworkSpec {
  std::size_t input_channels = 3;
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  std::size_t conv1_filters = 6;
  std::size_t conv2_filters = 16;
  std::size_t kernel = 5;
  std::size_t fc1 = 120;
  std::size_t fc2 = 84;
  double dropout_rate = 0.2;
  std::size_t n_classes = 2;
  std::vector<std::string> class_names = {"class0", "class1"};

  std::size_t conv1_out_h() const { return input_height - (kernel - 1); }
  std::size_t conv1_out_w() const { return input_width - (kernel - 1); }
  std::size_t pool1_out_h() const { return conv1_out_h() / 2; }
  std::size_t pool1_out_w() const { return conv1_out_w() / 2; }
  std::size_t conv2_out_h() const { return pool1_out_h() - (kernel - 1); }
  std::size_t conv2_out_w() const { return pool1_out_w() - (kernel - 1); }
  std::size_t pool2_out_h() const { return conv2_out_h() / 2; }
  std::size_t pool2_out_w() const { return conv2_out_w() / 2; }
  std::size_t flatten_length() const {
    return conv2_filters * pool2_out_h() * pool2_out_w();
  }

  void validate() const {
    if (n_classes < 2)
      throw std::invalid_argument("spec: n_classes must be >= 2");
    if (class_names.size() != n_classes)
      throw std::invalid_argument("spec: " + std::to_string(class_names.size()) +
                                  " class names for " +
                                  std::to_string(n_classes) + " classes");
    for (std::size_t i = 0; i < class_names.size(); ++i)
      for (std::size_t j = i + 1; j < class_names.size(); ++j)
        if (class_names[i] == class_names[j])
          throw std::invalid_argument("spec: duplicate class name '" +
                                      class_names[i] + "'");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("spec: dropout_rate must be in [0, 1)");
    if (input_height < kernel || input_width < kernel)
      throw std::invalid_argument("spec: input too small for conv1 (" +
                                  std::to_string(kernel) + "x" +
                                  std::to_string(kernel) + " kernel)");
    if (pool1_out_h() < kernel || pool1_out_w() < kernel)
      throw std::invalid_argument(
          "spec: input too small for conv2 after first pool (" +
          std::to_string(pool1_out_h()) + "x" + std::to_string(pool1_out_w()) +
          ")");
    if (pool2_out_h() < 1 || pool2_out_w() < 1)
      throw std::invalid_argument("spec: second pool output is empty");
  }

  nlohmann::json to_json() const {
    return {{"input_channels", input_channels},
            {"input_height", input_height},
            {"input_width", input_width},
            {"conv1_filters", conv1_filters},
            {"conv2_filters", conv2_filters},
            {"kernel", kernel},
            {"fc1", fc1},
            {"fc2", fc2},
            {"dropout_rate", dropout_rate},
            {"n_classes", n_classes}};
  }

  static NetworkSpec from_json(const nlohmann::json& j,
                               std::vector<std::string> class_names) {
    NetworkSpec s;
    s.input_channels = j.at("input_channels").get<std::size_t>();
    s.input_height = j.at("input_height").get<std::size_t>();
    s.input_width = j.at("input_width").get<std::size_t>();
    s.conv1_filters = j.at("conv1_filters").get<std::size_t>();
    s.conv2_filters = j.at("conv2_filters").get<std::size_t>();
    s.kernel = j.at("kernel").get<std::size_t>();
    s.fc1 = j.at("fc1").get<std::size_t>();
    s.fc2 = j.at("fc2").get<std::size_t>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.n_classes = j.at("n_classes").get<std::size_t>();
    s.class_names = std::move(class_names);
    s.validate();
    return s;
  }
};

struct CheckpointMeta {
  std::uint64_t root_seed = 0;
  std::size_t epochs_trained = 0;
};

struct Network {
  NetworkSpec spec;
  ConvParams conv1, conv2;
  BatchNormState bn1, bn2;
  DenseParams fc1, fc2, fc3;
  CheckpointMeta meta;

  // Name -> tensor map in checkpoint order; includes batch-norm buffers.
  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    return {{"conv1.w", &conv1.weights},
            {"conv1.b", &conv1.bias},
            {"bn1.gamma", &bn1.gamma},
            {"bn1.beta", &bn1.beta},
            {"bn1.running_mean", &bn1.running_mean},
            {"bn1.running_var", &bn1.running_var},
            {"conv2.w", &conv2.weights},
            {"conv2.b", &conv2.bias},
            {"bn2.gamma", &bn2.gamma},
            {"bn2.beta", &bn2.beta},
            {"bn2.running_mean", &bn2.running_mean},
            {"bn2.running_var", &bn2.running_var},
            {"fc1.w", &fc1.weights},
            {"fc1.b", &fc1.bias},
            {"fc2.w", &fc2.weights},
            {"fc2.b", &fc2.bias},
            {"fc3.w", &fc3.weights},
            {"fc3.b", &fc3.bias}};
  }

  // Trainable subset (no running stats).
  std::vector<std::pair<std::string, Tensor*>> trainable_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& [name, t] : named_tensors())
      if (name.find("running") == std::string::npos) out.emplace_back(name, t);
    return out;
  }
};

// He-style init: zero-mean normal, stddev sqrt(2/fan_in), biases zero.
inline Network build_network(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  Network net;
  net.spec = spec;
  const std::size_t k = spec.kernel;

  auto conv_init = [&](std::size_t out_ch, std::size_t in_ch) {
    ConvParams p;
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
    p.weights = sample_normal<float>(rng, {out_ch, in_ch, k, k}, 0.0, stddev);
    p.bias = Tensor({out_ch});
    return p;
  };
  auto bn_init = [&](std::size_t ch) {
    BatchNormState s;
    s.gamma = Tensor::full({ch}, 1.0f);
    s.beta = Tensor({ch});
    s.running_mean = Tensor({ch});
    s.running_var = Tensor::full({ch}, 1.0f);
    return s;
  };
  auto dense_init = [&](std::size_t out_n, std::size_t in_n) {
    DenseParams p;
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_n));
    p.weights = sample_normal<float>(rng, {out_n, in_n}, 0.0, stddev);
    p.bias = Tensor({out_n});
    return p;
  };

  net.conv1 = conv_init(spec.conv1_filters, spec.input_channels);
  net.bn1 = bn_init(spec.conv1_filters);
  net.conv2 = conv_init(spec.conv2_filters, spec.conv1_filters);
  net.bn2 = bn_init(spec.conv2_filters);
  net.fc1 = dense_init(spec.fc1, spec.flatten_length());
  net.fc2 = dense_init(spec.fc2, spec.fc1);
  net.fc3 = dense_init(spec.n_classes, spec.fc2);
  net.meta.root_seed = rng.seed();
  return net;
}

// Forward caches for one pass, consumed by backward.
struct ForwardTrace {
  ConvContextT<float> conv1, conv2;
  BatchNormContextT<float> bn1, bn2;
  ReluContextT<float> relu1, relu2;
  PoolContextT<float> pool1, pool2;
  DenseContextT<float> fc1, fc2, fc3;
  DropoutContextT<float> drop1, drop2;
  Mode mode = Mode::kTrain;
};

inline std::pair<Tensor, ForwardTrace> forward(Network& net, const Tensor& x,
                                               Mode mode, Rng& rng) {
  const NetworkSpec& s = net.spec;
  if (x.rank() != 4 || x.dim(1) != s.input_channels ||
      x.dim(2) != s.input_height || x.dim(3) != s.input_width)
    throw std::invalid_argument("forward: input " + Tensor::shape_str(x.shape()) +
                                " does not match spec " +
                                std::to_string(s.input_channels) + "x" +
                                std::to_string(s.input_height) + "x" +
                                std::to_string(s.input_width));
  ForwardTrace tr;
  tr.mode = mode;
  auto [c1, c1ctx] = conv2d_forward(x, net.conv1);
  tr.conv1 = std::move(c1ctx);
  auto [b1, b1ctx] = batchnorm_forward(c1, net.bn1, mode);
  tr.bn1 = std::move(b1ctx);
  auto [r1, r1ctx] = relu_forward(b1);
  tr.relu1 = std::move(r1ctx);
  auto [p1, p1ctx] = maxpool2x2_forward(r1);
  tr.pool1 = std::move(p1ctx);

  auto [c2, c2ctx] = conv2d_forward(p1, net.conv2);
  tr.conv2 = std::move(c2ctx);
  auto [b2, b2ctx] = batchnorm_forward(c2, net.bn2, mode);
  tr.bn2 = std::move(b2ctx);
  auto [r2, r2ctx] = relu_forward(b2);
  tr.relu2 = std::move(r2ctx);
  auto [p2, p2ctx] = maxpool2x2_forward(r2);
  tr.pool2 = std::move(p2ctx);

  Tensor flat = p2.reshaped({x.dim(0), s.flatten_length()});
  auto [f1, f1ctx] = dense_forward(flat, net.fc1);
  tr.fc1 = std::move(f1ctx);
  auto [d1, d1ctx] = dropout_forward(f1, s.dropout_rate, mode, rng);
  tr.drop1 = std::move(d1ctx);
  auto [f2, f2ctx] = dense_forward(d1, net.fc2);
  tr.fc2 = std::move(f2ctx);
  auto [d2, d2ctx] = dropout_forward(f2, s.dropout_rate, mode, rng);
  tr.drop2 = std::move(d2ctx);
  auto [logits, f3ctx] = dense_forward(d2, net.fc3);
  tr.fc3 = std::move(f3ctx);
  return {std::move(logits), std::move(tr)};
}

struct Gradients {
  Tensor conv1_w, conv1_b, bn1_gamma, bn1_beta;
  Tensor conv2_w, conv2_b, bn2_gamma, bn2_beta;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b;
  Tensor input;  // gradient w.r.t. the network input

  std::vector<std::pair<std::string, Tensor*>> named() {
    return {{"conv1.w", &conv1_w},   {"conv1.b", &conv1_b},
            {"bn1.gamma", &bn1_gamma}, {"bn1.beta", &bn1_beta},
            {"conv2.w", &conv2_w},   {"conv2.b", &conv2_b},
            {"bn2.gamma", &bn2_gamma}, {"bn2.beta", &bn2_beta},
            {"fc1.w", &fc1_w},       {"fc1.b", &fc1_b},
            {"fc2.w", &fc2_w},       {"fc2.b", &fc2_b},
            {"fc3.w", &fc3_w},       {"fc3.b", &fc3_b}};
  }
};

// Backward through the whole stack. Works for both train- and eval-mode
// traces; eval-mode batch norm differentiates through the (constant) running
// statistics and eval-mode dropout is the identity.
inline Gradients backward(Network& net, const Tensor& grad_logits,
                          const ForwardTrace& tr) {
  Gradients g;
  auto bn_grad = [](const Tensor& gout, const BatchNormContextT<float>& ctx,
                    const BatchNormState& s, Tensor& ggamma, Tensor& gbeta) {
    if (ctx.mode == Mode::kTrain) {
      auto [gx, gg, gb] = batchnorm_backward(gout, ctx, s);
      ggamma = std::move(gg);
      gbeta = std::move(gb);
      return gx;
    }
    // Eval: y = gamma * (x - rm) * inv_std + beta, statistics constant.
    const std::size_t batch = gout.dim(0), ch = gout.dim(1);
    const std::size_t plane = gout.dim(2) * gout.dim(3);
    Tensor gx(gout.shape());
    ggamma = Tensor({ch});
    gbeta = Tensor({ch});
    for (std::size_t c = 0; c < ch; ++c) {
      const float scale = s.gamma[c] * ctx.inv_std[c];
      for (std::size_t b = 0; b < batch; ++b) {
        const float* pg = gout.data() + (b * ch + c) * plane;
        const float* ph = ctx.xhat.data() + (b * ch + c) * plane;
        float* px = gx.data() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          gbeta[c] += pg[i];
          ggamma[c] += pg[i] * ph[i];
          px[i] = scale * pg[i];
        }
      }
    }
    return gx;
  };

  auto [g_d2, fc3w, fc3b] = dense_backward(grad_logits, tr.fc3, net.fc3);
  g.fc3_w = std::move(fc3w);
  g.fc3_b = std::move(fc3b);
  Tensor g_f2 = dropout_backward(g_d2, tr.drop2);
  auto [g_d1, fc2w, fc2b] = dense_backward(g_f2, tr.fc2, net.fc2);
  g.fc2_w = std::move(fc2w);
  g.fc2_b = std::move(fc2b);
  Tensor g_f1 = dropout_backward(g_d1, tr.drop1);
  auto [g_flat, fc1w, fc1b] = dense_backward(g_f1, tr.fc1, net.fc1);
  g.fc1_w = std::move(fc1w);
  g.fc1_b = std::move(fc1b);

  const NetworkSpec& s = net.spec;
  Tensor g_p2 = g_flat.reshaped({g_flat.dim(0), s.conv2_filters,
                                 s.pool2_out_h(), s.pool2_out_w()});
  Tensor g_r2 = maxpool2x2_backward(g_p2, tr.pool2);
  Tensor g_b2 = relu_backward(g_r2, tr.relu2);
  Tensor g_c2 = bn_grad(g_b2, tr.bn2, net.bn2, g.bn2_gamma, g.bn2_beta);
  auto [g_p1, c2w, c2b] = conv2d_backward(g_c2, tr.conv2, net.conv2);
  g.conv2_w = std::move(c2w);
  g.conv2_b = std::move(c2b);

  Tensor g_r1 = maxpool2x2_backward(g_p1, tr.pool1);
  Tensor g_b1 = relu_backward(g_r1, tr.relu1);
  Tensor g_c1 = bn_grad(g_b1, tr.bn1, net.bn1, g.bn1_gamma, g.bn1_beta);
  auto [g_x, c1w, c1b] = conv2d_backward(g_c1, tr.conv1, net.conv1);
  g.conv1_w = std::move(c1w);
  g.conv1_b = std::move(c1b);
  g.input = std::move(g_x);
  return g;
}

// --- parameter accounting ---

struct LayerParamCount {
  std::string layer;
  std::size_t count;
};

// Learnable parameters only; batch-norm running buffers are reported
// separately (they are serialized but not trained).
inline std::vector<LayerParamCount> count_parameters(const NetworkSpec& s) {
  const std::size_t k = s.kernel;
  return {
      {"conv1", s.conv1_filters * s.input_channels * k * k + s.conv1_filters},
      {"bn1", 2 * s.conv1_filters},
      {"conv2", s.conv2_filters * s.conv1_filters * k * k + s.conv2_filters},
      {"bn2", 2 * s.conv2_filters},
      {"fc1", s.fc1 * s.flatten_length() + s.fc1},
      {"fc2", s.fc2 * s.fc1 + s.fc2},
      {"fc3", s.n_classes * s.fc2 + s.n_classes},
  };
}

inline std::size_t total_parameters(const NetworkSpec& s) {
  std::size_t total = 0;
  for (const auto& l : count_parameters(s)) total += l.count;
  return total;
}

inline std::size_t batchnorm_buffer_elements(const NetworkSpec& s) {
  return 2 * s.conv1_filters + 2 * s.conv2_filters;
}

// --- checkpoint format "LTCNNCP1" ---
// magic (8 bytes), u32-LE header length, UTF-8 JSON header
// {format_version, spec, class_names, metadata, tensor_index}, then a
// contiguous little-endian f32 payload. Index offsets are payload-relative.

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json checkpoint_header(Network& net) {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (auto& [name, t] : net.named_tensors()) {
    const std::size_t len = t->size() * sizeof(float);
    index.push_back({{"name", name},
                     {"shape", t->shape()},
                     {"byte_offset", offset},
                     {"byte_len", len}});
    offset += len;
  }
  return {{"format_version", kCheckpointFormatVersion},
          {"spec", net.spec.to_json()},
          {"class_names", net.spec.class_names},
          {"metadata",
           {{"root_seed", net.meta.root_seed},
            {"epochs_trained", net.meta.epochs_trained}}},
          {"tensor_index", index}};
}

// Total serialized size: magic + length word + JSON header + f32 payload.
inline std::size_t model_size_bytes(const NetworkSpec& spec) {
  NetworkSpec s = spec;
  s.validate();
  Rng rng(0);
  Network net = build_network(s, rng);
  const std::string header = checkpoint_header(net).dump();
  const std::size_t payload =
      sizeof(float) * (total_parameters(s) + batchnorm_buffer_elements(s));
  return 8 + 4 + header.size() + payload;
}

inline void save_checkpoint(Network& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  const std::string header = checkpoint_header(net).dump();
  f.write("LTCNNCP1", 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(header.size());
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (auto& [name, t] : net.named_tensors())
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Network load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "LTCNNCP1", 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 4);
  if (!f) throw std::runtime_error("checkpoint: truncated header length in " + path);
  std::string header(hlen, '\0');
  f.read(header.data(), hlen);
  if (static_cast<std::uint32_t>(f.gcount()) != hlen)
    throw std::runtime_error("checkpoint: truncated header in " + path);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: malformed header JSON in " + path +
                             ": " + e.what());
  }
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             j.at("format_version").dump());

  NetworkSpec spec = NetworkSpec::from_json(
      j.at("spec"), j.at("class_names").get<std::vector<std::string>>());
  Rng rng(0);
  Network net = build_network(spec, rng);
  net.meta.root_seed = j.at("metadata").at("root_seed").get<std::uint64_t>();
  net.meta.epochs_trained =
      j.at("metadata").at("epochs_trained").get<std::size_t>();

  const std::streampos payload_start = f.tellg();
  std::vector<std::pair<std::string, Tensor*>> tensors = net.named_tensors();
  std::size_t loaded = 0;
  for (const auto& entry : j.at("tensor_index")) {
    const std::string name = entry.at("name").get<std::string>();
    Tensor* target = nullptr;
    for (auto& [n, t] : tensors)
      if (n == name) target = t;
    if (!target)
      throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != target->shape())
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               Tensor::shape_str(shape) + ", spec requires " +
                               Tensor::shape_str(target->shape()));
    const std::size_t len = entry.at("byte_len").get<std::size_t>();
    if (len != target->size() * sizeof(float))
      throw std::runtime_error("checkpoint: tensor '" + name + "' byte length mismatch");
    f.seekg(payload_start +
            static_cast<std::streamoff>(entry.at("byte_offset").get<std::size_t>()));
    f.read(reinterpret_cast<char*>(target->data()),
           static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(f.gcount()) != len)
      throw std::runtime_error("checkpoint: truncated payload in " + path);
    ++loaded;
  }
  if (loaded != tensors.size())
    throw std::runtime_error("checkpoint: index lists " + std::to_string(loaded) +
                             " tensors, expected " + std::to_string(tensors.size()));
  return net;
}

}  // namespace ltcnn
