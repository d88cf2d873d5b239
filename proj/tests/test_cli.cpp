// Spawns the built CLI binary (path injected via LTCNN_CLI_PATH) and checks
// exit codes, artifacts and determinism end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ltcnn/network.hpp"
#include "ltcnn/tensor.hpp"

using namespace ltcnn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "ltcnn_cli_test";

int run(const std::string& args, std::string* output = nullptr) {
  const fs::path log = kRoot / "run.log";
  const std::string cmd = std::string(LTCNN_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void make_tree(const fs::path& root, std::size_t per_class, std::size_t hw) {
  fs::remove_all(root);
  Rng rng(42);
  for (int side = 0; side < 2; ++side) {
    const fs::path cls = root / (side == 0 ? "left" : "right");
    fs::create_directories(cls);
    for (std::size_t i = 0; i < per_class; ++i) {
      Tensor t({3, hw, hw});
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < hw; ++y)
          for (std::size_t x = 0; x < hw; ++x) {
            const bool bright = side == 0 ? x < hw / 2 : x >= hw / 2;
            t(c, y, x) = (bright ? 0.9f : 0.1f) +
                         0.05f * (float)rng.uniform(-1, 1);
          }
      char buf[32];
      std::snprintf(buf, sizeof(buf), "s%03zu.ltt1", i);
      save_ltt1((cls / buf).string(), t);
    }
  }
}

void write_config(const fs::path& path, const json& j) {
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

json base_config(const fs::path& data_root, const fs::path& out_dir) {
  return {{"network", {{"input_height", 24}, {"input_width", 24}, {"n_classes", 2}}},
          {"train", {{"epochs", 4}, {"batch_size", 4}, {"seed", 7}}},
          {"data", {{"root", data_root.string()}, {"split_ratio", 0.25}}},
          {"output_dir", out_dir.string()}};
}

struct Fixture {
  Fixture() {
    fs::create_directories(kRoot);
    make_tree(kRoot / "data", 6, 24);
  }
};
Fixture fixture;

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  std::string out;
  CHECK(run("", &out) == 2);
  CHECK(run("frobnicate", &out) == 2);
  CHECK(run("train", &out) == 2);  // missing --config
  CHECK(run("eval --checkpoint missing.ltcnn --data nowhere --out x", &out) == 2);
  CHECK(run("--help", &out) == 0);
}

TEST_CASE("config validation rejects unknown keys and bad values") {
  const fs::path cfg = kRoot / "bad.json";
  std::string out;

  write_config(cfg, {{"bogus", 1}});
  CHECK(run("train --config " + cfg.string(), &out) == 2);
  CHECK(out.find("bogus") != std::string::npos);

  json j = base_config(kRoot / "data", kRoot / "badout");
  j["train"]["epochs"] = 0;
  write_config(cfg, j);
  CHECK(run("train --config " + cfg.string(), &out) == 2);

  j = base_config(kRoot / "data", kRoot / "badout");
  j["network"]["n_classes"] = 5;  // tree has 2 classes
  write_config(cfg, j);
  CHECK(run("train --config " + cfg.string(), &out) == 2);
  CHECK(out.find("classes") != std::string::npos);

  j = base_config(kRoot / "data", kRoot / "badout");
  j["data"]["augment_ops"] = {"sparkle"};
  write_config(cfg, j);
  CHECK(run("train --config " + cfg.string(), &out) == 2);
}

TEST_CASE("train writes artifacts; resolved config reproduces the run") {
  const fs::path cfg = kRoot / "train.json";
  write_config(cfg, base_config(kRoot / "data", kRoot / "out_a"));
  std::string out;
  REQUIRE(run("train --config " + cfg.string(), &out) == 0);
  CHECK(out.find("epoch 1/4") != std::string::npos);
  for (const char* name :
       {"checkpoint.ltcnn", "best.ltcnn", "curves.csv", "config.resolved.json"})
    CHECK(fs::is_regular_file(kRoot / "out_a" / name));

  // the resolved config, retargeted at a new output dir, reproduces the
  // checkpoint byte for byte
  json resolved = json::parse(slurp(kRoot / "out_a" / "config.resolved.json"));
  resolved["output_dir"] = (kRoot / "out_b").string();
  write_config(kRoot / "resolved.json", resolved);
  REQUIRE(run("train --config " + (kRoot / "resolved.json").string()) == 0);
  CHECK(slurp(kRoot / "out_a" / "checkpoint.ltcnn") ==
        slurp(kRoot / "out_b" / "checkpoint.ltcnn"));
  CHECK(slurp(kRoot / "out_a" / "curves.csv") ==
        slurp(kRoot / "out_b" / "curves.csv"));

  // curves.csv has header + one row per epoch
  std::ifstream f(kRoot / "out_a" / "curves.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(f, line);) ++lines;
  CHECK(lines == 5);
}

TEST_CASE("divergent training exits with code 3") {
  json j = base_config(kRoot / "data", kRoot / "out_div");
  j["train"]["optimizer"] = "sgd-momentum";
  j["train"]["learning_rate"] = 1e18;
  j["train"]["epochs"] = 3;
  const fs::path cfg = kRoot / "div.json";
  write_config(cfg, j);
  std::string out;
  CHECK(run("train --config " + cfg.string(), &out) == 3);
  CHECK(out.find("divergence") != std::string::npos);
}

TEST_CASE("eval, predict and saliency on a trained checkpoint") {
  const std::string ckpt = (kRoot / "out_a" / "best.ltcnn").string();
  REQUIRE(fs::is_regular_file(ckpt));  // produced by the train test case
  std::string out;

  REQUIRE(run("eval --checkpoint " + ckpt + " --data " +
                  (kRoot / "data").string() + " --out " +
                  (kRoot / "evalout").string(),
              &out) == 0);
  CHECK(out.find("accuracy=") != std::string::npos);
  json report = json::parse(slurp(kRoot / "evalout" / "report.json"));
  const double acc = report["accuracy"].get<double>();
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(report["per_class"].contains("left"));
  CHECK(fs::is_regular_file(kRoot / "evalout" / "report.csv"));
  CHECK(fs::is_regular_file(kRoot / "evalout" / "confusion.csv"));

  const std::string img = (kRoot / "data" / "left" / "s000.ltt1").string();
  REQUIRE(run("predict --checkpoint " + ckpt + " --image " + img, &out) == 0);
  CHECK(out.substr(0, 6) == "class=");
  CHECK(out.find("prob=") != std::string::npos);

  const std::string pgm = (kRoot / "sal.pgm").string();
  const std::string raw = (kRoot / "sal.ltt1").string();
  REQUIRE(run("saliency --checkpoint " + ckpt + " --image " + img + " --out " +
                  pgm + " --raw " + raw + " --class right",
              &out) == 0);
  CHECK(slurp(pgm).substr(0, 2) == "P5");
  Tensor raw_map = load_ltt1(raw);
  CHECK(raw_map.shape() == std::vector<std::size_t>{24, 24});
  CHECK(run("saliency --checkpoint " + ckpt + " --image " + img + " --out " +
                pgm + " --class nosuch",
            &out) == 2);
}

TEST_CASE("inspect prints the parameter table") {
  std::string out;
  REQUIRE(run("inspect", &out) == 0);
  CHECK(out.find("total         5406650") != std::string::npos);
  CHECK(out.find("params_m=5.41") != std::string::npos);
  CHECK(out.find("model_size_mb=21.63") != std::string::npos);

  REQUIRE(run("inspect --checkpoint " + (kRoot / "out_a" / "best.ltcnn").string(),
              &out) == 0);
  CHECK(out.find("fc1") != std::string::npos);
  CHECK(out.find("total") != std::string::npos);
}

TEST_CASE("split materializes a stratified file tree") {
  std::string out;
  REQUIRE(run("split --data " + (kRoot / "data").string() +
                  " --ratio 0.25 --seed 3 --out " + (kRoot / "splitout").string(),
              &out) == 0);
  CHECK(out.find("train=9 test=3") != std::string::npos);
  std::size_t train_n = 0, test_n = 0;
  for (const char* cls : {"left", "right"}) {
    for (auto& e : fs::directory_iterator(kRoot / "splitout" / "train" / cls))
      ++train_n, (void)e;
    for (auto& e : fs::directory_iterator(kRoot / "splitout" / "test" / cls))
      ++test_n, (void)e;
  }
  CHECK(train_n == 9);
  CHECK(test_n == 3);
}

TEST_CASE("augment writes originals plus derived images") {
  std::string out;
  REQUIRE(run("augment --data " + (kRoot / "data").string() + " --out " +
                  (kRoot / "augout").string() + " --ops rotate,flip --seed 3",
              &out) == 0);
  CHECK(out.find("items=36") != std::string::npos);  // 12 * (1 + 2 ops)
  std::size_t originals = 0, rotated = 0, flipped = 0;
  for (const char* cls : {"left", "right"})
    for (auto& e : fs::directory_iterator(kRoot / "augout" / cls)) {
      const std::string name = e.path().filename().string();
      if (name.find("__rotate.png") != std::string::npos)
        ++rotated;
      else if (name.find("__flip.png") != std::string::npos)
        ++flipped;
      else
        ++originals;
    }
  CHECK(originals == 12);
  CHECK(rotated == 12);
  CHECK(flipped == 12);
  CHECK(run("augment --data " + (kRoot / "data").string() + " --out " +
                (kRoot / "augbad").string() + " --ops sparkle",
            &out) == 2);
}
