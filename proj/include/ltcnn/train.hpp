#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltcnn/data.hpp"
#include "ltcnn/layers.hpp"
#include "ltcnn/network.hpp"
#include "ltcnn/rng.hpp"

namespace ltcnn {

enum class Optimizer { kSgdMomentum, kAdam };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  double momentum = 0.9;  // sgd-momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;  // epochs between validation passes

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (learning_rate <= 0) throw std::invalid_argument("train: learning_rate must be > 0");
    if (eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
};

// Raised when the training loss goes non-finite; never swallowed.
struct DivergenceError : std::runtime_error {
  DivergenceError(std::size_t epoch, std::size_t batch)
      : std::runtime_error("divergence at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch)) {}
};

// v <- momentum*v + g; p <- p - lr*v
inline void sgd_momentum_step(Tensor& params, const Tensor& grads,
                              Tensor& velocity, double lr, double momentum) {
  detail::require_same_shape(params, grads, "sgd_momentum_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = static_cast<float>(momentum * velocity[i] + grads[i]);
    params[i] -= static_cast<float>(lr * velocity[i]);
  }
}

// Bias-corrected Adam.
inline void adam_step(Tensor& params, const Tensor& grads, Tensor& m, Tensor& v,
                      std::size_t t, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  detail::require_same_shape(params, grads, "adam_step");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = static_cast<float>(beta1 * m[i] + (1.0 - beta1) * g);
    v[i] = static_cast<float>(beta2 * v[i] + (1.0 - beta2) * g * g);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
  }
}

// Per-tensor optimizer slots, one pair per trainable tensor.
class OptimizerState {
 public:
  OptimizerState(Network& net, const TrainConfig& cfg) : cfg_(cfg) {
    for (auto& [name, t] : net.trainable_tensors()) {
      slot1_.emplace_back(t->shape());
      slot2_.emplace_back(t->shape());
    }
  }

  void step(Network& net, Gradients& grads) {
    ++t_;
    std::size_t i = 0;
    auto params = net.trainable_tensors();
    auto gmap = grads.named();
    for (auto& [name, p] : params) {
      Tensor* g = nullptr;
      for (auto& [gname, gt] : gmap)
        if (gname == name) g = gt;
      if (cfg_.optimizer == Optimizer::kAdam)
        adam_step(*p, *g, slot1_[i], slot2_[i], t_, cfg_.learning_rate,
                  cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
      else
        sgd_momentum_step(*p, *g, slot1_[i], cfg_.learning_rate, cfg_.momentum);
      ++i;
    }
  }

 private:
  TrainConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Tensor> slot1_;  // velocity / first moment
  std::vector<Tensor> slot2_;  // adam second moment
};

struct TrainResult {
  std::vector<EpochRecord> records;
  std::optional<Network> best;  // highest val accuracy, ties to earlier epoch
  std::size_t best_epoch = 0;
};

namespace detail {
struct PassStats {
  double loss = 0.0;
  double acc = 0.0;
};

inline PassStats eval_pass(Network& net, const LabeledDataset& ds,
                           std::size_t batch_size, Rng rng) {
  BatchIterator it(ds, net.spec, batch_size, rng, /*shuffle=*/false);
  double loss_sum = 0.0;
  std::size_t correct = 0, total = 0;
  while (auto batch = it.next()) {
    auto [logits, trace] = forward(net, batch->inputs, Mode::kEval, rng);
    const auto sm = softmax_cross_entropy(logits, batch->labels);
    const std::size_t b = batch->labels.size();
    loss_sum += static_cast<double>(sm.loss) * static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < net.spec.n_classes; ++j)
        if (logits(i, j) > logits(i, arg)) arg = j;
      if (arg == batch->labels[i]) ++correct;
    }
    total += b;
  }
  return {loss_sum / static_cast<double>(total),
          static_cast<double>(correct) / static_cast<double>(total)};
}
}  // namespace detail

// Seeded epoch loop: shuffle, forward/backward/step per batch, optional
// validation pass. Everything downstream of cfg.seed is deterministic.
inline TrainResult train(Network& net, const LabeledDataset& train_ds,
                         const LabeledDataset* val_ds, const TrainConfig& cfg,
                         std::ostream* progress = nullptr) {
  cfg.validate();
  if (train_ds.class_names != net.spec.class_names)
    throw std::invalid_argument("train: dataset classes do not match network spec");
  if (val_ds && val_ds->class_names != net.spec.class_names)
    throw std::invalid_argument("train: validation classes do not match network spec");

  const Rng root(cfg.seed);
  OptimizerState opt(net, cfg);
  TrainResult result;
  double best_val = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    BatchIterator it(train_ds, net.spec, cfg.batch_size, root.split(epoch),
                     /*shuffle=*/true);
    Rng dropout_rng = root.split(0x10000000ULL + epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0, total = 0, batch_index = 0;
    while (auto batch = it.next()) {
      ++batch_index;
      auto [logits, trace] = forward(net, batch->inputs, Mode::kTrain, dropout_rng);
      const auto sm = softmax_cross_entropy(logits, batch->labels);
      if (!std::isfinite(sm.loss)) throw DivergenceError(epoch, batch_index);
      const std::size_t b = batch->labels.size();
      loss_sum += static_cast<double>(sm.loss) * static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < net.spec.n_classes; ++j)
          if (logits(i, j) > logits(i, arg)) arg = j;
        if (arg == batch->labels[i]) ++correct;
      }
      total += b;
      Gradients grads = backward(net, sm.grad_logits, trace);
      opt.step(net, grads);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(total);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(total);
    if (val_ds && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      const auto stats =
          detail::eval_pass(net, *val_ds, cfg.batch_size, root.split(0));
      rec.val_loss = stats.loss;
      rec.val_acc = stats.acc;
      if (stats.acc > best_val) {
        best_val = stats.acc;
        result.best = net;  // copy at this epoch
        result.best_epoch = epoch;
      }
    }
    result.records.push_back(rec);
    if (progress) {
      std::ostringstream os;
      os << "epoch " << epoch << "/" << cfg.epochs
         << " train_loss=" << std::setprecision(6) << rec.train_loss
         << " train_acc=" << rec.train_acc;
      if (rec.val_loss)
        os << " val_loss=" << *rec.val_loss << " val_acc=" << *rec.val_acc;
      *progress << os.str() << "\n" << std::flush;
    }
    net.meta.epochs_trained = epoch;
  }
  return result;
}

namespace detail {
inline std::string sig6(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}
}  // namespace detail

// CSV: epoch,train_loss,train_acc,val_loss,val_acc; values at 6 significant
// digits, empty validation fields when absent.
inline void emit_curves(const std::vector<EpochRecord>& records,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("emit_curves: cannot open " + path);
  f << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const EpochRecord& r : records) {
    f << r.epoch << "," << detail::sig6(r.train_loss) << ","
      << detail::sig6(r.train_acc) << ",";
    if (r.val_loss) f << detail::sig6(*r.val_loss);
    f << ",";
    if (r.val_acc) f << detail::sig6(*r.val_acc);
    f << "\n";
  }
}

}  // namespace ltcnn
