#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "ltcnn/saliency.hpp"

using namespace ltcnn;
namespace fs = std::filesystem;

namespace {

NetworkSpec small_spec(std::size_t hw = 32) {
  NetworkSpec s;
  s.input_height = s.input_width = hw;
  return s;
}

Tensor random_image(Rng& rng, const NetworkSpec& s) {
  Tensor x({s.input_channels, s.input_height, s.input_width});
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = (float)rng.uniform(-1, 1);
  return x;
}

}  // namespace

TEST_CASE("zero first conv layer gives an all-zero map") {
  NetworkSpec s = small_spec();
  Rng rng(1);
  Network net = build_network(s, rng);
  std::fill(net.conv1.weights.vec().begin(), net.conv1.weights.vec().end(), 0.0f);
  Tensor img = random_image(rng, s);
  SaliencyMap map = saliency_map(net, img);
  CHECK(map.values.shape() == std::vector<std::size_t>{32, 32});
  for (std::size_t i = 0; i < map.values.size(); ++i)
    CHECK(map.values[i] == 0.0f);
}

TEST_CASE("map shape, non-negativity, target validation") {
  NetworkSpec s = small_spec();
  Rng rng(2);
  Network net = build_network(s, rng);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor img = random_image(rng, s);
    SaliencyMap map = saliency_map(net, img, trial % 2);
    CHECK(map.values.shape() ==
          std::vector<std::size_t>{s.input_height, s.input_width});
    for (std::size_t i = 0; i < map.values.size(); ++i)
      CHECK(map.values[i] >= 0.0f);
  }
  Tensor img = random_image(rng, s);
  CHECK_THROWS_WITH_AS(saliency_map(net, img, 5),
                       doctest::Contains("out of range"),
                       std::invalid_argument);
  CHECK_THROWS_AS(saliency_map(net, Tensor({1, 3, 32, 32})),
                  std::invalid_argument);
}

TEST_CASE("saliency is invariant to the dropout rate") {
  Rng r1(3), r2(3);
  NetworkSpec a = small_spec(), b = small_spec();
  b.dropout_rate = 0.8;
  Network na = build_network(a, r1);
  Network nb = build_network(b, r2);
  Rng ir(4);
  Tensor img = random_image(ir, a);
  SaliencyMap ma = saliency_map(na, img, 0);
  SaliencyMap mb = saliency_map(nb, img, 0);
  CHECK(ma.values.vec() == mb.values.vec());
}

TEST_CASE("scaling the target logit's weights scales the map linearly") {
  NetworkSpec s = small_spec();
  Rng rng(5);
  Network net = build_network(s, rng);
  Rng ir(6);
  Tensor img = random_image(ir, s);
  SaliencyMap base = saliency_map(net, img, 1);

  const float c = 3.0f;
  for (std::size_t k = 0; k < net.fc3.weights.dim(1); ++k)
    net.fc3.weights(std::size_t(1), k) *= c;
  net.fc3.bias[1] *= c;
  SaliencyMap scaled = saliency_map(net, img, 1);
  for (std::size_t i = 0; i < base.values.size(); ++i)
    CHECK(scaled.values[i] == doctest::Approx(c * base.values[i]).epsilon(1e-4));
}

TEST_CASE("auto target picks the argmax class") {
  NetworkSpec s = small_spec();
  Rng rng(8);
  Network net = build_network(s, rng);
  Rng ir(9);
  Tensor img = random_image(ir, s);
  Rng er(0);
  Tensor x = img.reshaped({1, 3, 32, 32});
  auto [logits, tr] = forward(net, x, Mode::kEval, er);
  std::size_t arg = logits(std::size_t(0), std::size_t(1)) >
                            logits(std::size_t(0), std::size_t(0))
                        ? 1
                        : 0;
  SaliencyMap map = saliency_map(net, img);
  CHECK(map.target_class == arg);
}

TEST_CASE("pgm export: degenerate maps and exact re-parse") {
  const fs::path dir = fs::temp_directory_path() / "ltcnn_saliency";
  fs::create_directories(dir);
  auto read_pgm = [](const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::string magic;
    std::size_t w, h, maxval;
    f >> magic >> w >> h >> maxval;
    f.get();  // single whitespace after header
    REQUIRE(magic == "P5");
    REQUIRE(maxval == 255);
    std::vector<unsigned char> data(w * h);
    f.read(reinterpret_cast<char*>(data.data()), (std::streamsize)(w * h));
    return std::make_tuple(h, w, data);
  };

  {
    SaliencyMap map;
    map.values = Tensor::full({4, 6}, 0.37f);
    const std::string p = (dir / "const.pgm").string();
    normalize_and_export(map, p);
    auto [h, w, data] = read_pgm(p);
    CHECK(h == 4);
    CHECK(w == 6);
    for (unsigned char v : data) CHECK(v == 0);
  }
  {
    SaliencyMap map;
    map.values = Tensor({3, 3});
    map.values(std::size_t(1), std::size_t(2)) = 0.5f;
    const std::string p = (dir / "single.pgm").string();
    normalize_and_export(map, p);
    auto [h, w, data] = read_pgm(p);
    for (std::size_t i = 0; i < 9; ++i)
      CHECK(data[i] == (i == 5 ? 255 : 0));
  }
  {
    // re-parsed file equals the quantized map exactly
    SaliencyMap map;
    map.values = Tensor({2, 2}, {0.0f, 0.25f, 0.5f, 1.0f});
    const std::string p = (dir / "quant.pgm").string();
    normalize_and_export(map, p);
    auto [h, w, data] = read_pgm(p);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(data[i] == (unsigned char)std::lround(map.values[i] * 255.0f));
  }
  fs::remove_all(dir);
}

TEST_CASE("perturbation oracle: top-saliency pixel moves the logit most") {
  NetworkSpec s = small_spec();
  std::size_t wins = 0;
  const int trials = 10;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(100 + trial);
    Network net = build_network(s, rng);
    Tensor img = random_image(rng, s);
    SaliencyMap map = saliency_map(net, img, 0);
    std::size_t hi = 0, lo = 0;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      if (map.values[i] > map.values[hi]) hi = i;
      if (map.values[i] < map.values[lo]) lo = i;
    }
    auto logit_delta = [&](std::size_t pixel) {
      const std::size_t plane = s.input_height * s.input_width;
      Rng er(0);
      double worst = 0;
      for (std::size_t c = 0; c < s.input_channels; ++c) {
        Tensor pert = img;
        pert[c * plane + pixel] += 1e-2f;
        auto [l0, t0] = forward(net, img.reshaped({1, 3, 32, 32}), Mode::kEval, er);
        auto [l1, t1] = forward(net, pert.reshaped({1, 3, 32, 32}), Mode::kEval, er);
        worst = std::max(worst, std::fabs((double)l1[0] - (double)l0[0]));
      }
      return worst;
    };
    if (logit_delta(hi) > logit_delta(lo)) ++wins;
  }
  CHECK(wins >= 9);
}
