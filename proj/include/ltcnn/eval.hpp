#pragma once

#include <stdexcept>
#include <vector>

#include "ltcnn/data.hpp"
#include "ltcnn/metrics.hpp"
#include "ltcnn/network.hpp"

namespace ltcnn {

// Eval-mode forward over the dataset; prediction is the argmax logit with
// ties to the lowest class index.
inline EvalReport evaluate(Network& net, const LabeledDataset& ds,
                           std::size_t batch_size = 32) {
  if (ds.items.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (ds.class_names != net.spec.class_names)
    throw std::invalid_argument("evaluate: dataset classes do not match network spec");
  Rng rng(0);  // unused in eval mode
  BatchIterator it(ds, net.spec, batch_size, rng, /*shuffle=*/false);
  std::vector<std::size_t> true_labels, pred_labels;
  while (auto batch = it.next()) {
    auto [logits, trace] = forward(net, batch->inputs, Mode::kEval, rng);
    for (std::size_t i = 0; i < batch->labels.size(); ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < net.spec.n_classes; ++j)
        if (logits(i, j) > logits(i, arg)) arg = j;
      true_labels.push_back(batch->labels[i]);
      pred_labels.push_back(arg);
    }
  }
  return compute_metrics(true_labels, pred_labels, net.spec.n_classes,
                         net.spec.class_names);
}

}  // namespace ltcnn
