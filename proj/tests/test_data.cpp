#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "ltcnn/data.hpp"
#include "ltcnn/image_io.hpp"

using namespace ltcnn;
namespace fs = std::filesystem;

namespace {

// <root>/<class>/<file>.ltt1 tree with constant-intensity CHW planes.
fs::path make_tree(const std::string& name,
                   const std::vector<std::pair<std::string, std::size_t>>& classes,
                   std::size_t hw = 8) {
  const fs::path root = fs::temp_directory_path() / name;
  fs::remove_all(root);
  for (const auto& [cls, count] : classes) {
    fs::create_directories(root / cls);
    for (std::size_t i = 0; i < count; ++i) {
      Tensor t = Tensor::full({3, hw, hw}, 0.25f + 0.5f * (float)(i % 2));
      char buf[32];
      std::snprintf(buf, sizeof(buf), "img%04zu.ltt1", i);
      save_ltt1((root / cls / buf).string(), t);
    }
  }
  return root;
}

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.input_height = s.input_width = 32;
  return s;
}

}  // namespace

TEST_CASE("load_dataset: ordering, classes, error paths") {
  const fs::path root = make_tree("ltcnn_ds1", {{"bee", 3}, {"ant", 3}});
  LabeledDataset ds = load_dataset(root.string());
  CHECK(ds.class_names == std::vector<std::string>{"ant", "bee"});
  CHECK(ds.size() == 6);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ds.items[i].class_index == 0);
  for (std::size_t i = 3; i < 6; ++i) CHECK(ds.items[i].class_index == 1);

  LabeledDataset again = load_dataset(root.string());
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(ds.items[i].path == again.items[i].path);

  fs::create_directories(root / "empty_class");
  CHECK_THROWS_WITH_AS(load_dataset(root.string()),
                       doctest::Contains("empty_class"), std::runtime_error);
  fs::remove_all(root);
}

TEST_CASE("preprocess: black, white, range and shape") {
  NetworkSpec s = tiny_spec();
  Image black = make_image(8, 8, 3);
  Tensor tb = preprocess(black, s);
  CHECK(tb.shape() == std::vector<std::size_t>{3, 32, 32});
  for (std::size_t i = 0; i < tb.size(); ++i) CHECK(tb[i] == -1.0f);

  Image white = make_image(8, 8, 3);
  std::fill(white.data.begin(), white.data.end(), 1.0f);
  Tensor tw = preprocess(white, s);
  for (std::size_t i = 0; i < tw.size(); ++i) CHECK(tw[i] == 1.0f);

  Rng rng(1);
  Image noisy = make_image(11, 17, 3);
  for (auto& v : noisy.data) v = (float)rng.next_double();
  Tensor tn = preprocess(noisy, s);
  for (std::size_t i = 0; i < tn.size(); ++i) {
    CHECK(tn[i] >= -1.0f);
    CHECK(tn[i] <= 1.0f);
  }
  // grayscale replicated to 3 channels
  Image gray = make_image(8, 8, 1);
  std::fill(gray.data.begin(), gray.data.end(), 0.5f);
  Tensor tg = preprocess(gray, s);
  CHECK(tg.shape() == std::vector<std::size_t>{3, 32, 32});
}

TEST_CASE("bilinear upscale matches the interpolation formula") {
  // 2x2 checkerboard -> 4x4, align-corners-false: src = (dst+0.5)/2 - 0.5
  Image img = make_image(2, 2, 1);
  img.at(0, 0, 0) = 1.0f;
  img.at(0, 1, 1) = 1.0f;
  Image up = resize_bilinear(img, 4, 4);
  auto ref = [&](double y, double x) {
    y = std::clamp(y, 0.0, 1.0);
    x = std::clamp(x, 0.0, 1.0);
    const double v00 = img.at(0, 0, 0), v01 = img.at(0, 0, 1);
    const double v10 = img.at(0, 1, 0), v11 = img.at(0, 1, 1);
    return (v00 * (1 - x) + v01 * x) * (1 - y) + (v10 * (1 - x) + v11 * x) * y;
  };
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      CHECK(up.at(0, y, x) ==
            doctest::Approx(ref((y + 0.5) / 2.0 - 0.5, (x + 0.5) / 2.0 - 0.5))
                .epsilon(1e-6));
}

TEST_CASE("stratified split: reproduces the 325+125 -> 90 arithmetic") {
  const fs::path root = make_tree("ltcnn_ds2", {{"damaged", 325}, {"intact", 125}});
  LabeledDataset ds = load_dataset(root.string());
  SplitPair sp = stratified_split(ds, 0.2, 42);
  CHECK(sp.test.size() == 90);
  CHECK(sp.train.size() == 360);
  std::size_t test_damaged = 0, test_intact = 0;
  for (const auto& item : sp.test.items)
    (item.class_index == 0 ? test_damaged : test_intact)++;
  CHECK(test_damaged == 65);
  CHECK(test_intact == 25);
  fs::remove_all(root);
}

TEST_CASE("stratified split: symmetry, errors, disjoint union property") {
  const fs::path root = make_tree("ltcnn_ds3", {{"a", 2}, {"b", 2}});
  LabeledDataset ds = load_dataset(root.string());
  SplitPair sp = stratified_split(ds, 0.5, 1);
  CHECK(sp.test.size() == 2);
  CHECK(sp.train.size() == 2);
  std::size_t ta = 0, tb = 0;
  for (const auto& i : sp.test.items) (i.class_index == 0 ? ta : tb)++;
  CHECK(ta == 1);
  CHECK(tb == 1);
  CHECK_THROWS_AS(stratified_split(ds, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(stratified_split(ds, 1.0, 1), std::invalid_argument);
  fs::remove_all(root);

  const fs::path single = make_tree("ltcnn_ds4", {{"lonely", 1}, {"other", 4}});
  LabeledDataset dss = load_dataset(single.string());
  CHECK_THROWS_WITH_AS(stratified_split(dss, 0.2, 1),
                       doctest::Contains("lonely"), std::invalid_argument);
  fs::remove_all(single);

  // disjointness + exact union for a grid of class sizes and seeds
  for (std::size_t n0 = 2; n0 <= 6; ++n0) {
    for (std::size_t n1 = 2; n1 <= 6; n1 += 2) {
      const fs::path r =
          make_tree("ltcnn_ds5", {{"x", n0}, {"y", n1}, {"z", 5}});
      LabeledDataset d = load_dataset(r.string());
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SplitPair s = stratified_split(d, 0.4, seed);
        CHECK(s.train.size() + s.test.size() == d.size());
        std::set<std::string> seen;
        for (const auto& i : s.train.items) seen.insert(i.path);
        for (const auto& i : s.test.items) {
          CHECK(seen.count(i.path) == 0);
          seen.insert(i.path);
        }
        CHECK(seen.size() == d.size());
        // per-class test fraction within 1/n_c of the ratio
        std::vector<std::size_t> per_class(3, 0), totals = {n0, n1, 5};
        for (const auto& i : s.test.items) per_class[i.class_index]++;
        for (std::size_t c = 0; c < 3; ++c) {
          const double frac = (double)per_class[c] / (double)totals[c];
          CHECK(std::fabs(frac - 0.4) <= 1.0 / (double)totals[c] + 1e-12);
        }
      }
      fs::remove_all(r);
    }
  }
}

TEST_CASE("augment: multiplicity, labels, parameter ranges") {
  const fs::path root = make_tree("ltcnn_ds6", {{"p", 4}, {"q", 3}});
  LabeledDataset ds = load_dataset(root.string());
  Rng rng(9);
  LabeledDataset all =
      augment(ds, {AugOp::kRotate, AugOp::kFlip, AugOp::kShear}, rng);
  CHECK(all.size() == 4 * ds.size());

  Rng rng2(9);
  LabeledDataset two = augment(ds, {AugOp::kRotate, AugOp::kShear}, rng2);
  CHECK(two.size() == 3 * ds.size());

  std::size_t originals = 0;
  for (const auto& item : all.items) {
    if (item.op == AugOp::kNone) ++originals;
    if (item.op == AugOp::kRotate) {
      CHECK(item.param >= -15.0);
      CHECK(item.param <= 15.0);
    }
    if (item.op == AugOp::kShear) {
      CHECK(item.param >= -0.15);
      CHECK(item.param <= 0.15);
    }
  }
  CHECK(originals == ds.size());
  // label preserved for each derived item (groups of 4: original + 3 ops)
  for (std::size_t i = 0; i < all.size(); i += 4)
    for (std::size_t k = 1; k < 4; ++k)
      CHECK(all.items[i + k].class_index == all.items[i].class_index);

  Rng rng3(4);
  CHECK_THROWS_AS(augment(ds, {}, rng3), std::invalid_argument);
  fs::remove_all(root);
}

TEST_CASE("transforms: flip involution, rotate-0 identity, shear-0 identity") {
  Rng rng(13);
  Image img = make_image(9, 7, 3);
  for (auto& v : img.data) v = (float)rng.next_double();

  Image flipped2 = hflip(hflip(img));
  CHECK(flipped2.data == img.data);

  Image rot0 = rotate(img, 0.0);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(rot0.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));

  Image sh0 = shear(img, 0.0);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(sh0.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
}

TEST_CASE("batch iterator: partial batches and seeded permutation") {
  NetworkSpec spec = tiny_spec();
  {
    const fs::path root = make_tree("ltcnn_ds7", {{"a", 3}, {"b", 3}});
    LabeledDataset ds = load_dataset(root.string());
    BatchIterator it(ds, spec, 32, Rng(1), true);
    auto b = it.next();
    REQUIRE(b.has_value());
    CHECK(b->labels.size() == 6);
    CHECK_FALSE(it.next().has_value());
    CHECK_THROWS_AS(BatchIterator(ds, spec, 0, Rng(1), false),
                    std::invalid_argument);
    fs::remove_all(root);
  }
  {
    const fs::path root = make_tree("ltcnn_ds8", {{"a", 50}, {"b", 50}});
    LabeledDataset ds = load_dataset(root.string());
    BatchIterator it(ds, spec, 32, Rng(7), true);
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> labels_a;
    while (auto b = it.next()) {
      sizes.push_back(b->labels.size());
      for (auto l : b->labels) labels_a.push_back(l);
    }
    CHECK(sizes == std::vector<std::size_t>{32, 32, 32, 4});

    BatchIterator it2(ds, spec, 32, Rng(7), true);
    std::vector<std::size_t> labels_b;
    while (auto b = it2.next())
      for (auto l : b->labels) labels_b.push_back(l);
    CHECK(labels_a == labels_b);
    fs::remove_all(root);
  }
}

TEST_CASE("png round trip through the codec") {
  const fs::path dir = fs::temp_directory_path() / "ltcnn_png";
  fs::create_directories(dir);
  Image img = make_image(5, 6, 3);
  Rng rng(3);
  for (auto& v : img.data)
    v = (float)(std::lround(rng.next_double() * 255.0)) / 255.0f;  // quantized
  const std::string path = (dir / "img.png").string();
  save_png(path, img);
  Image back = load_image(path);
  CHECK(back.height == 5);
  CHECK(back.width == 6);
  CHECK(back.channels == 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));

  CHECK_THROWS_WITH_AS(load_image((dir / "missing.png").string()),
                       doctest::Contains("missing.png"), std::runtime_error);
  fs::remove_all(dir);
}
