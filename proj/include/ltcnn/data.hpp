#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltcnn/image.hpp"
#include "ltcnn/image_io.hpp"
#include "ltcnn/network.hpp"
#include "ltcnn/rng.hpp"
#include "ltcnn/tensor.hpp"
#include "ltcnn/util.hpp"

namespace ltcnn {

enum class AugOp { kNone, kRotate, kFlip, kShear };

inline const char* aug_op_name(AugOp op) {
  switch (op) {
    case AugOp::kRotate: return "rotate";
    case AugOp::kFlip: return "flip";
    case AugOp::kShear: return "shear";
    default: return "original";
  }
}

struct DatasetItem {
  std::string path;
  std::size_t class_index = 0;
  AugOp op = AugOp::kNone;  // kNone = original
  double param = 0.0;       // rotation degrees or shear factor
};

struct LabeledDataset {
  std::vector<DatasetItem> items;
  std::vector<std::string> class_names;
  std::string root;

  std::size_t size() const { return items.size(); }
};

struct SplitPair {
  LabeledDataset train;
  LabeledDataset test;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

// One subdirectory per class; class names are the sorted subdirectory names
// and items are sorted by (class, filename), so repeated loads of the same
// tree produce the same order.
inline LabeledDataset load_dataset(const std::string& root_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root_dir))
    throw std::runtime_error("dataset root is not a directory: " + root_dir);
  LabeledDataset ds;
  ds.root = root_dir;
  for (const auto& entry : fs::directory_iterator(root_dir))
    if (entry.is_directory())
      ds.class_names.push_back(entry.path().filename().string());
  std::sort(ds.class_names.begin(), ds.class_names.end());
  if (ds.class_names.empty())
    throw std::runtime_error("dataset has no class subdirectories: " + root_dir);
  for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& entry :
         fs::directory_iterator(fs::path(root_dir) / ds.class_names[c])) {
      if (!entry.is_regular_file()) continue;
      const std::string p = entry.path().string();
      if (!is_supported_image_file(p))
        throw std::runtime_error("unsupported file type: " + p);
      files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw std::runtime_error("empty class directory: " + ds.class_names[c]);
    for (auto& f : files) ds.items.push_back({std::move(f), c});
  }
  return ds;
}

// Decode an item and apply its augmentation op, if any.
inline Image load_item_image(const DatasetItem& item) {
  Image img = load_image(item.path);
  switch (item.op) {
    case AugOp::kRotate: return rotate(img, item.param);
    case AugOp::kFlip: return hflip(img);
    case AugOp::kShear: return shear(img, item.param);
    default: return img;
  }
}

// Within each class: shuffle by the seeded rng, first round(n_c * ratio)
// items go to test. If the rounded per-class counts miss the global target
// round(N * ratio), single items are shifted starting from the largest
// classes (ties by class-name order).
inline SplitPair stratified_split(const LabeledDataset& ds, double ratio,
                                  std::uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0)
    throw std::invalid_argument("split: ratio must be in (0, 1)");
  const std::size_t n_classes = ds.class_names.size();
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < ds.items.size(); ++i)
    by_class[ds.items[i].class_index].push_back(i);

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> shuffled(n_classes);
  std::vector<std::size_t> test_count(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (by_class[c].empty())
      throw std::invalid_argument("split: class '" + ds.class_names[c] +
                                  "' has no items");
    if (by_class[c].size() == 1)
      throw std::invalid_argument("split: class '" + ds.class_names[c] +
                                  "' has a single item; any split empties one side");
    shuffled[c] = by_class[c];
    for (std::size_t i = shuffled[c].size(); i > 1; --i)
      std::swap(shuffled[c][i - 1], shuffled[c][rng.next_below(i)]);
    test_count[c] = static_cast<std::size_t>(
        std::llround(static_cast<double>(by_class[c].size()) * ratio));
  }

  const std::size_t target = static_cast<std::size_t>(
      std::llround(static_cast<double>(ds.items.size()) * ratio));
  // Classes ordered largest first, ties by name.
  std::vector<std::size_t> order(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) order[c] = c;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (by_class[a].size() != by_class[b].size())
      return by_class[a].size() > by_class[b].size();
    return ds.class_names[a] < ds.class_names[b];
  });
  auto total_test = [&] {
    std::size_t s = 0;
    for (std::size_t v : test_count) s += v;
    return s;
  };
  while (total_test() != target) {
    bool moved = false;
    for (std::size_t c : order) {
      if (total_test() < target && test_count[c] < by_class[c].size() - 1) {
        ++test_count[c];
        moved = true;
        break;
      }
      if (total_test() > target && test_count[c] > 0) {
        --test_count[c];
        moved = true;
        break;
      }
    }
    if (!moved)
      throw std::runtime_error("split: cannot reach global test target");
  }

  SplitPair out;
  out.ratio = ratio;
  out.seed = seed;
  out.train.class_names = out.test.class_names = ds.class_names;
  out.train.root = out.test.root = ds.root;
  std::vector<std::size_t> test_idx, train_idx;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < shuffled[c].size(); ++i)
      (i < test_count[c] ? test_idx : train_idx).push_back(shuffled[c][i]);
  }
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  for (std::size_t i : train_idx) out.train.items.push_back(ds.items[i]);
  for (std::size_t i : test_idx) out.test.items.push_back(ds.items[i]);
  return out;
}

// Every original plus one derived item per selected op, so k ops give a
// (k+1)x item count. Rotation angles are uniform in [-15, 15] degrees and
// shear factors uniform in [-0.15, 0.15]; both are drawn here so the result
// is a pure function of (ds, ops, rng state).
inline LabeledDataset augment(const LabeledDataset& ds,
                              const std::vector<AugOp>& ops, Rng& rng) {
  if (ops.empty()) throw std::invalid_argument("augment: empty op list");
  for (AugOp op : ops)
    if (op == AugOp::kNone)
      throw std::invalid_argument("augment: 'original' is not an op");
  LabeledDataset out;
  out.class_names = ds.class_names;
  out.root = ds.root;
  for (const DatasetItem& item : ds.items) {
    out.items.push_back(item);
    for (AugOp op : ops) {
      DatasetItem derived = item;
      derived.op = op;
      if (op == AugOp::kRotate)
        derived.param = rng.uniform(-15.0, 15.0);
      else if (op == AugOp::kShear)
        derived.param = rng.uniform(-0.15, 0.15);
      else
        derived.param = 0.0;
      out.items.push_back(derived);
    }
  }
  return out;
}

struct Batch {
  Tensor inputs;  // [B, C, H, W]
  std::vector<std::size_t> labels;
};

// Emits epoch batches in a seed-determined order; images are decoded and
// preprocessed lazily per batch (distinct items in parallel).
class BatchIterator {
 public:
  BatchIterator(const LabeledDataset& ds, const NetworkSpec& spec,
                std::size_t batch_size, Rng rng, bool shuffle)
      : ds_(&ds), spec_(spec), batch_size_(batch_size), rng_(rng) {
    if (batch_size < 1)
      throw std::invalid_argument("batch_iterator: batch_size < 1");
    perm_.resize(ds.items.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
    if (shuffle)
      for (std::size_t i = perm_.size(); i > 1; --i)
        std::swap(perm_[i - 1], perm_[rng_.next_below(i)]);
  }

  std::optional<Batch> next() {
    if (pos_ >= perm_.size()) return std::nullopt;
    const std::size_t n = std::min(batch_size_, perm_.size() - pos_);
    Batch batch;
    batch.inputs = Tensor(
        {n, spec_.input_channels, spec_.input_height, spec_.input_width});
    batch.labels.resize(n);
    const std::size_t stride =
        spec_.input_channels * spec_.input_height * spec_.input_width;
    std::vector<std::string> errors(n);
    parallel_for(n, [&](std::size_t i) {
      const DatasetItem& item = ds_->items[perm_[pos_ + i]];
      try {
        const Tensor x = preprocess(load_item_image(item), spec_);
        std::copy(x.data(), x.data() + stride,
                  batch.inputs.data() + i * stride);
        batch.labels[i] = item.class_index;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    for (const auto& e : errors)
      if (!e.empty()) throw std::runtime_error(e);
    pos_ += n;
    return batch;
  }

  void reset() { pos_ = 0; }

 private:
  const LabeledDataset* ds_;
  NetworkSpec spec_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

}  // namespace ltcnn
