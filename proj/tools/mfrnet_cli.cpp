// mfrnet command-line interface: train / infer / evaluate / sweep / synth.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mfrnet/checkpoint.hpp"
#include "mfrnet/config.hpp"
#include "mfrnet/dataset.hpp"
#include "mfrnet/file_util.hpp"
#include "mfrnet/image_io.hpp"
#include "mfrnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mfrnet;

namespace {

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ArgumentError("not an integer: '" + tok + "'");
    }
  }
  if (out.empty()) throw ArgumentError("empty integer list '" + s + "'");
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

RunConfig load_config(const std::string& path) {
  RunConfig c = path.empty() ? toy_run_config() : load_run_config(path);
  apply_env_overrides(c);
  c.validate();
  return c;
}

DatasetIndex index_for(const RunConfig& c) {
  if (c.data.root.empty()) throw ConfigError("config: data.root is not set");
  DatasetIndex idx = index_dataset(c.data.root, {c.data.mt_style, c.data.train_limit});
  std::cerr << "indexed " << idx.root << ": " << idx.count(Split::kTrain) << " train, "
            << idx.count(Split::kTest) << " test\n";
  return idx;
}

void write_heatmaps(const Evaluation& ev, const std::string& root, const fs::path& out) {
  for (std::size_t i = 0; i < ev.items.size(); ++i) {
    fs::path rel = fs::path(ev.items[i].image_path).lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") rel = fs::path(ev.items[i].image_path).filename();
    rel.replace_extension(".png");
    save_heatmap((out / "heatmaps" / rel).string(), ev.maps[i].scores);
  }
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out) {
  RunConfig c = load_config(config_path);
  if (!data.empty()) c.data.root = data;
  if (!out.empty()) c.output_dir = out;
  const DatasetIndex idx = index_for(c);
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  save_run_config((dir / "run_config.json").string(), c);
  std::ofstream log(dir / "train_log.jsonl");
  FitOptions opts;
  opts.checkpoint_dir = (dir / "checkpoints").string();
  opts.on_step = [&log](const StepLog& s) { log << step_log_json(s) << '\n'; };
  const AnomalyDetector det = fit_detector(c, idx, opts);
  det.save((dir / "model.ckpt").string(), static_cast<std::int64_t>(c.train.epochs));
  std::cerr << "wrote " << (dir / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& images, const std::string& out,
              bool no_smoothing) {
  const AnomalyDetector det = AnomalyDetector::from_checkpoint(checkpoint);
  InferenceConfig inf = det.config().inference;
  if (no_smoothing) inf.smoothing = false;
  std::vector<fs::path> files;
  fs::path base(images);
  if (fs::is_regular_file(base)) {
    files.push_back(base);
    base = base.parent_path();
  } else if (fs::is_directory(base)) {
    for (const auto& e : fs::recursive_directory_iterator(base)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    throw ArgumentError("--images: " + images + " does not exist");
  }
  if (files.empty()) throw ArgumentError("--images: no images under " + images);
  std::string records;
  for (const auto& f : files) {
    const AnomalyMap map = det.detect(load_image(f.string(), det.config().image_size), inf);
    fs::path rel = f.lexically_relative(base);
    rel.replace_extension(".png");
    save_heatmap((fs::path(out) / rel).string(), map.scores);
    records += detection_record_json(f.string(), map, inf.seed) + "\n";
    std::cout << f.string() << " image_score=" << map.image_score << '\n';
  }
  atomic_write_file((fs::path(out) / "detections.jsonl").string(), records);
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset, const std::string& out,
                 bool heatmaps, bool no_smoothing) {
  const AnomalyDetector det = AnomalyDetector::from_checkpoint(checkpoint);
  InferenceConfig inf = det.config().inference;
  if (no_smoothing) inf.smoothing = false;
  const DatasetIndex idx = index_dataset(dataset, {det.config().data.mt_style, 0});
  const Evaluation ev = evaluate_detector(det, idx, inf);
  const fs::path dir(out);
  atomic_write_file((dir / "report.csv").string(), report_csv(ev.report));
  atomic_write_file((dir / "report.json").string(), report_json(ev.report));
  if (heatmaps) write_heatmaps(ev, dataset, dir);
  std::cout << report_csv(ev.report);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& data, const std::string& param,
              const std::string& values, const std::string& out) {
  const RunConfig base = load_config(config_path);
  std::vector<std::pair<std::string, RunConfig>> runs;
  const auto items = param == "n" ? split(values, ',') : split(values, ';');
  if (items.empty()) throw ArgumentError("--values is empty");
  for (const auto& v : items) {
    RunConfig c = base;
    if (!data.empty()) c.data.root = data;
    if (param == "k_set") {
      c.train.k_set = c.inference.k_set = parse_ints(v);
    } else if (param == "n") {
      c.train.subset_count = c.inference.subset_count = parse_ints(v).at(0);
    } else {
      c.backbone.layer_indices = parse_ints(v);
      c.net.in_channels = aggregated_channels(c.backbone);
    }
    c.validate();
    runs.emplace_back(v, std::move(c));
  }
  const DatasetIndex idx = index_for(runs.front().second);
  std::ostringstream table;
  table << param << ",AUROC,MAE,ACC,F1,threshold\n";
  for (const auto& [label, c] : runs) {
    std::cerr << "sweep " << param << "=" << label << '\n';
    const AnomalyDetector det = fit_detector(c, idx);
    const EvalReport r = evaluate_detector(det, idx, c.inference).report;
    table << '"' << label << '"' << ',' << r.auroc << ',' << r.mae << ',' << r.acc << ',' << r.f1
          << ',' << r.threshold << '\n';
  }
  atomic_write_file((fs::path(out) / ("sweep_" + param + ".csv")).string(), table.str());
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked feature restoration for unsupervised anomaly localization"};
  app.require_subcommand(1);

  std::string config_path, data, out, checkpoint, images, dataset, param, values;
  bool heatmaps = true, no_smoothing = false;
  int normals = 20, defects = 30, size = 64, good = -1;
  std::uint64_t seed = 7;

  auto* train = app.add_subcommand("train", "Train a model on a dataset's normal images");
  train->add_option("--config", config_path, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data, "Dataset root (overrides data.root)");
  train->add_option("--out", out, "Output directory (overrides output_dir)");

  auto* infer = app.add_subcommand("infer", "Write anomaly heatmaps for images");
  infer->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  infer->add_option("--images", images, "Image file or directory")->required();
  infer->add_option("--out", out)->required();
  infer->add_flag("--no-smoothing", no_smoothing, "Disable Gaussian smoothing");

  auto* evaluate = app.add_subcommand("evaluate", "Pixel-level metrics on a dataset's test split");
  evaluate->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", out)->required();
  evaluate->add_flag("--heatmaps,!--no-heatmaps", heatmaps, "Write per-image heatmaps");
  evaluate->add_flag("--no-smoothing", no_smoothing, "Disable Gaussian smoothing");

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over a parameter grid");
  sweep->add_option("--config", config_path, "Base run configuration JSON (default: toy)");
  sweep->add_option("--data", data, "Dataset root (overrides data.root)");
  sweep->add_option("--param", param)->required()->check(CLI::IsMember({"k_set", "n", "layers"}));
  sweep->add_option("--values", values, "n: 1,2,3; k_set and layers: sets separated by ';' (2,4;2,4,8)")
      ->required();
  sweep->add_option("--out", out)->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic texture dataset");
  synth->add_option("--out", out)->required();
  synth->add_option("--normals", normals, "Training images")->check(CLI::PositiveNumber);
  synth->add_option("--defects", defects, "Defective test images")->check(CLI::PositiveNumber);
  synth->add_option("--good", good, "Defect-free test images (default defects/3)");
  synth->add_option("--size", size, "Image size")->check(CLI::Range(16, 4096));
  synth->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return cmd_train(config_path, data, out);
    if (*infer) return cmd_infer(checkpoint, images, out, no_smoothing);
    if (*evaluate) return cmd_evaluate(checkpoint, dataset, out, heatmaps, no_smoothing);
    if (*sweep) return cmd_sweep(config_path, data, param, values, out);
    if (*synth) {
      const DatasetIndex idx = make_synthetic_dataset(out, normals, defects, seed, {size, good});
      std::cerr << "wrote " << idx.count(Split::kTrain) << " train and " << idx.count(Split::kTest)
                << " test images to " << out << '\n';
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
