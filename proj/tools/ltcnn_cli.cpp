// Command-line entry point: train / eval / predict / saliency / inspect /
// split / augment. Exit codes: 0 success, 2 usage or config or data error,
// 3 numerical divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "ltcnn/data.hpp"
#include "ltcnn/eval.hpp"
#include "ltcnn/image_io.hpp"
#include "ltcnn/network.hpp"
#include "ltcnn/saliency.hpp"
#include "ltcnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ltcnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

struct RunConfig {
  NetworkSpec network;  // class_names filled from the dataset
  TrainConfig train;
  std::string data_root;
  std::optional<std::string> val_root;
  std::optional<double> split_ratio;
  std::vector<AugOp> augment_ops;
  std::string output_dir;
};

AugOp parse_aug_op(const std::string& name) {
  if (name == "rotate") return AugOp::kRotate;
  if (name == "flip") return AugOp::kFlip;
  if (name == "shear") return AugOp::kShear;
  throw ConfigError("unknown augmentation op '" + name +
                    "' (expected rotate, flip or shear)");
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"network", "train", "data", "output_dir"}, "config");

  RunConfig cfg;
  const json net = j.value("network", json::object());
  check_keys(net,
             {"input_channels", "input_height", "input_width", "conv1_filters",
              "conv2_filters", "kernel", "fc1", "fc2", "dropout_rate",
              "n_classes"},
             "config.network");
  NetworkSpec& s = cfg.network;
  try {
    s.input_channels = get_or<std::size_t>(net, "input_channels", s.input_channels);
    s.input_height = get_or<std::size_t>(net, "input_height", s.input_height);
    s.input_width = get_or<std::size_t>(net, "input_width", s.input_width);
    s.conv1_filters = get_or<std::size_t>(net, "conv1_filters", s.conv1_filters);
    s.conv2_filters = get_or<std::size_t>(net, "conv2_filters", s.conv2_filters);
    s.kernel = get_or<std::size_t>(net, "kernel", s.kernel);
    s.fc1 = get_or<std::size_t>(net, "fc1", s.fc1);
    s.fc2 = get_or<std::size_t>(net, "fc2", s.fc2);
    s.dropout_rate = get_or<double>(net, "dropout_rate", s.dropout_rate);
    if (net.contains("n_classes"))
      s.n_classes = net.at("n_classes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config.network: ") + e.what());
  }

  const json tr = j.value("train", json::object());
  check_keys(tr,
             {"epochs", "batch_size", "learning_rate", "optimizer", "momentum",
              "beta1", "beta2", "adam_eps", "seed", "eval_every"},
             "config.train");
  try {
    cfg.train.epochs = get_or<std::size_t>(tr, "epochs", cfg.train.epochs);
    cfg.train.batch_size = get_or<std::size_t>(tr, "batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = get_or<double>(tr, "learning_rate", cfg.train.learning_rate);
    cfg.train.momentum = get_or<double>(tr, "momentum", cfg.train.momentum);
    cfg.train.beta1 = get_or<double>(tr, "beta1", cfg.train.beta1);
    cfg.train.beta2 = get_or<double>(tr, "beta2", cfg.train.beta2);
    cfg.train.adam_eps = get_or<double>(tr, "adam_eps", cfg.train.adam_eps);
    cfg.train.seed = get_or<std::uint64_t>(tr, "seed", cfg.train.seed);
    cfg.train.eval_every = get_or<std::size_t>(tr, "eval_every", cfg.train.eval_every);
    const std::string opt = get_or<std::string>(tr, "optimizer", "adam");
    if (opt == "adam")
      cfg.train.optimizer = Optimizer::kAdam;
    else if (opt == "sgd-momentum")
      cfg.train.optimizer = Optimizer::kSgdMomentum;
    else
      throw ConfigError("config.train.optimizer: unknown optimizer '" + opt + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config.train: ") + e.what());
  }
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.train: ") + e.what());
  }

  if (!j.contains("data") || !j.at("data").contains("root"))
    throw ConfigError("config.data.root is required");
  const json& data = j.at("data");
  check_keys(data, {"root", "val_root", "split_ratio", "augment_ops"},
             "config.data");
  cfg.data_root = data.at("root").get<std::string>();
  if (data.contains("val_root"))
    cfg.val_root = data.at("val_root").get<std::string>();
  if (data.contains("split_ratio"))
    cfg.split_ratio = data.at("split_ratio").get<double>();
  if (data.contains("augment_ops"))
    for (const auto& op : data.at("augment_ops"))
      cfg.augment_ops.push_back(parse_aug_op(op.get<std::string>()));

  if (!j.contains("output_dir"))
    throw ConfigError("config.output_dir is required");
  cfg.output_dir = j.at("output_dir").get<std::string>();

  if (!fs::is_directory(cfg.data_root))
    throw ConfigError("config.data.root does not exist: " + cfg.data_root);
  if (cfg.val_root && !fs::is_directory(*cfg.val_root))
    throw ConfigError("config.data.val_root does not exist: " + *cfg.val_root);
  return cfg;
}

json resolved_config_json(const RunConfig& cfg) {
  json data = {{"root", cfg.data_root}};
  if (cfg.val_root) data["val_root"] = *cfg.val_root;
  if (cfg.split_ratio) data["split_ratio"] = *cfg.split_ratio;
  if (!cfg.augment_ops.empty()) {
    json ops = json::array();
    for (AugOp op : cfg.augment_ops) ops.push_back(aug_op_name(op));
    data["augment_ops"] = ops;
  }
  return {
      {"network", cfg.network.to_json()},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"learning_rate", cfg.train.learning_rate},
        {"optimizer",
         cfg.train.optimizer == Optimizer::kAdam ? "adam" : "sgd-momentum"},
        {"momentum", cfg.train.momentum},
        {"beta1", cfg.train.beta1},
        {"beta2", cfg.train.beta2},
        {"adam_eps", cfg.train.adam_eps},
        {"seed", cfg.train.seed},
        {"eval_every", cfg.train.eval_every}}},
      {"data", data},
      {"output_dir", cfg.output_dir}};
}

int cmd_train(const std::string& config_path) {
  RunConfig cfg = parse_run_config(config_path);
  LabeledDataset ds = load_dataset(cfg.data_root);

  if (cfg.network.n_classes != ds.class_names.size())
    throw ConfigError("config.network.n_classes=" +
                      std::to_string(cfg.network.n_classes) + " but data root has " +
                      std::to_string(ds.class_names.size()) + " classes");
  cfg.network.class_names = ds.class_names;
  cfg.network.validate();

  const Rng root(cfg.train.seed);
  std::optional<LabeledDataset> val;
  LabeledDataset train_ds = ds;
  if (cfg.val_root) {
    val = load_dataset(*cfg.val_root);
  } else if (cfg.split_ratio) {
    SplitPair sp = stratified_split(ds, *cfg.split_ratio, cfg.train.seed);
    train_ds = std::move(sp.train);
    val = std::move(sp.test);
  }
  if (!cfg.augment_ops.empty()) {
    Rng aug_rng = root.split(0xA0ULL);
    train_ds = augment(train_ds, cfg.augment_ops, aug_rng);
  }

  Rng build_rng = root.split(1);
  Network net = build_network(cfg.network, build_rng);
  net.meta.root_seed = cfg.train.seed;

  fs::create_directories(cfg.output_dir);
  TrainResult res = train(net, train_ds, val ? &*val : nullptr, cfg.train,
                          &std::cout);

  const fs::path out(cfg.output_dir);
  emit_curves(res.records, (out / "curves.csv").string());
  save_checkpoint(net, (out / "checkpoint.ltcnn").string());
  Network& best = res.best ? *res.best : net;
  save_checkpoint(best, (out / "best.ltcnn").string());
  std::ofstream rc(out / "config.resolved.json");
  rc << resolved_config_json(cfg).dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             std::size_t batch, const std::string& out_dir) {
  Network net = load_checkpoint(checkpoint);
  LabeledDataset ds = load_dataset(data_dir);
  EvalReport report = evaluate(net, ds, batch);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  write_report(report, (out / "report.json").string(),
               (out / "report.csv").string());
  std::ofstream cc(out / "confusion.csv");
  cc << confusion_to_csv(report.confusion);
  std::printf("accuracy=%.4f samples=%zu\n", report.accuracy,
              report.confusion.total());
  return kExitOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& image_path) {
  Network net = load_checkpoint(checkpoint);
  if (!fs::is_regular_file(image_path))
    throw ConfigError("image file does not exist: " + image_path);
  const Tensor x = preprocess(load_image(image_path), net.spec);
  Rng rng(0);
  auto [logits, trace] =
      forward(net, x.reshaped({1, net.spec.input_channels,
                               net.spec.input_height, net.spec.input_width}),
              Mode::kEval, rng);
  std::size_t arg = 0;
  for (std::size_t j = 1; j < net.spec.n_classes; ++j)
    if (logits(std::size_t(0), j) > logits(std::size_t(0), arg)) arg = j;
  const auto sm = softmax_cross_entropy(logits, {arg});
  std::printf("class=%s prob=%.6f\n", net.spec.class_names[arg].c_str(),
              (double)sm.probs(std::size_t(0), arg));
  return kExitOk;
}

int cmd_saliency(const std::string& checkpoint, const std::string& image_path,
                 const std::string& out_path, const std::string& target,
                 const std::string& raw_path) {
  Network net = load_checkpoint(checkpoint);
  if (!fs::is_regular_file(image_path))
    throw ConfigError("image file does not exist: " + image_path);
  const Tensor x = preprocess(load_image(image_path), net.spec);
  std::optional<std::size_t> cls;
  if (!target.empty()) {
    const auto& names = net.spec.class_names;
    const auto it = std::find(names.begin(), names.end(), target);
    if (it != names.end()) {
      cls = static_cast<std::size_t>(it - names.begin());
    } else {
      try {
        cls = std::stoul(target);
      } catch (...) {
        throw ConfigError("unknown class '" + target + "'");
      }
      if (*cls >= net.spec.n_classes)
        throw ConfigError("class index " + target + " out of range");
    }
  }
  SaliencyMap map = saliency_map(net, x, cls);
  normalize_and_export(map, out_path);
  if (!raw_path.empty()) save_ltt1(raw_path, map.values);
  std::printf("target=%s map=%s\n",
              net.spec.class_names[map.target_class].c_str(), out_path.c_str());
  return kExitOk;
}

int cmd_inspect(const std::string& config_path, const std::string& checkpoint) {
  NetworkSpec spec;
  if (!checkpoint.empty()) {
    spec = load_checkpoint(checkpoint).spec;
  } else if (!config_path.empty()) {
    RunConfig cfg = parse_run_config(config_path);
    spec = cfg.network;
    spec.class_names.clear();
    for (std::size_t i = 0; i < spec.n_classes; ++i)
      spec.class_names.push_back("class" + std::to_string(i));
    spec.validate();
  } else {
    spec.validate();  // built-in defaults
  }
  std::printf("%-8s %12s\n", "layer", "params");
  for (const auto& l : count_parameters(spec))
    std::printf("%-8s %12zu\n", l.layer.c_str(), l.count);
  const std::size_t total = total_parameters(spec);
  const std::size_t bytes = model_size_bytes(spec);
  std::printf("%-8s %12zu\n", "total", total);
  std::printf("params_m=%.2f\n", (double)total / 1e6);
  std::printf("model_size_bytes=%zu\n", bytes);
  std::printf("model_size_mb=%.2f\n", (double)bytes / 1e6);
  return kExitOk;
}

int cmd_split(const std::string& data_dir, double ratio, std::uint64_t seed,
              const std::string& out_dir) {
  LabeledDataset ds = load_dataset(data_dir);
  SplitPair sp = stratified_split(ds, ratio, seed);
  auto materialize = [&](const LabeledDataset& part, const std::string& name) {
    for (const auto& item : part.items) {
      const fs::path dst = fs::path(out_dir) / name /
                           ds.class_names[item.class_index] /
                           fs::path(item.path).filename();
      fs::create_directories(dst.parent_path());
      fs::copy_file(item.path, dst, fs::copy_options::overwrite_existing);
    }
  };
  materialize(sp.train, "train");
  materialize(sp.test, "test");
  std::printf("train=%zu test=%zu\n", sp.train.size(), sp.test.size());
  return kExitOk;
}

int cmd_augment(const std::string& data_dir, const std::string& out_dir,
                const std::string& ops_csv, std::uint64_t seed) {
  LabeledDataset ds = load_dataset(data_dir);
  std::vector<AugOp> ops;
  std::stringstream ss(ops_csv);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) ops.push_back(parse_aug_op(tok));
  if (ops.empty()) throw ConfigError("--ops must name at least one op");
  Rng rng(seed);
  LabeledDataset out_ds = augment(ds, ops, rng);
  std::size_t written = 0;
  for (const auto& item : out_ds.items) {
    const fs::path src(item.path);
    const fs::path cls_dir =
        fs::path(out_dir) / ds.class_names[item.class_index];
    fs::create_directories(cls_dir);
    if (item.op == AugOp::kNone) {
      fs::copy_file(src, cls_dir / src.filename(),
                    fs::copy_options::overwrite_existing);
    } else {
      const std::string stem = src.stem().string();
      save_png((cls_dir / (stem + "__" + aug_op_name(item.op) + ".png")).string(),
               load_item_image(item));
    }
    ++written;
  }
  std::printf("items=%zu\n", written);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lightweight CNN toolkit"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, data_dir, image_path, out_path,
      target_class, raw_path, ops = "rotate,flip,shear";
  std::size_t batch = 32;
  double ratio = 0.2;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "train from a JSON config");
  train_cmd->add_option("--config", config_path, "run config")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_option("--batch", batch);
  eval_cmd->add_option("--out", out_path)->required();

  auto* predict_cmd = app.add_subcommand("predict", "classify one image");
  predict_cmd->add_option("--checkpoint", checkpoint)->required();
  predict_cmd->add_option("--image", image_path)->required();

  auto* saliency_cmd = app.add_subcommand("saliency", "gradient saliency map");
  saliency_cmd->add_option("--checkpoint", checkpoint)->required();
  saliency_cmd->add_option("--image", image_path)->required();
  saliency_cmd->add_option("--out", out_path)->required();
  saliency_cmd->add_option("--class", target_class, "class name or index");
  saliency_cmd->add_option("--raw", raw_path, "also dump the raw map as LTT1");

  auto* inspect_cmd = app.add_subcommand("inspect", "parameter accounting");
  inspect_cmd->add_option("--config", config_path);
  inspect_cmd->add_option("--checkpoint", checkpoint);

  auto* split_cmd = app.add_subcommand("split", "materialize a stratified split");
  split_cmd->add_option("--data", data_dir)->required();
  split_cmd->add_option("--ratio", ratio);
  split_cmd->add_option("--seed", seed);
  split_cmd->add_option("--out", out_path)->required();

  auto* augment_cmd = app.add_subcommand("augment", "write augmented copies");
  augment_cmd->add_option("--data", data_dir)->required();
  augment_cmd->add_option("--out", out_path)->required();
  augment_cmd->add_option("--ops", ops, "comma list: rotate,flip,shear");
  augment_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(config_path);
    if (app.got_subcommand(eval_cmd))
      return cmd_eval(checkpoint, data_dir, batch, out_path);
    if (app.got_subcommand(predict_cmd))
      return cmd_predict(checkpoint, image_path);
    if (app.got_subcommand(saliency_cmd))
      return cmd_saliency(checkpoint, image_path, out_path, target_class,
                          raw_path);
    if (app.got_subcommand(inspect_cmd))
      return cmd_inspect(config_path, checkpoint);
    if (app.got_subcommand(split_cmd))
      return cmd_split(data_dir, ratio, seed, out_path);
    if (app.got_subcommand(augment_cmd))
      return cmd_augment(data_dir, out_path, ops, seed);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
