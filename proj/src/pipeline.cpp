#include "mfrnet/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mfrnet/checkpoint.hpp"
#include "mfrnet/file_util.hpp"
#include "mfrnet/image_io.hpp"

namespace mfrnet {
namespace fs = std::filesystem;
namespace {

using json = nlohmann::ordered_json;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

json metric(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json report_to_json(const EvalReport& r) {
  return {{"auroc", metric(r.auroc)},
          {"mae", r.mae},
          {"acc", r.acc},
          {"f1", r.f1},
          {"threshold", r.threshold},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}}};
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(6) << std::fixed << v;
  return s.str();
}

}  // namespace

AnomalyDetector::AnomalyDetector(RunConfig config, ChannelStats stats, RestorationNet net)
    : config_(std::move(config)), backbone_(config_.backbone), stats_(std::move(stats)), net_(std::move(net)) {
  config_.validate();
  if (stats_.mean.size() != static_cast<std::size_t>(config_.net.in_channels)) {
    throw ConfigError("detector: feature statistics cover " + std::to_string(stats_.mean.size()) +
                      " channels, the network expects " + std::to_string(config_.net.in_channels));
  }
  if (!(net_.config() == config_.net)) throw ConfigError("detector: network does not match the config");
}

AnomalyDetector AnomalyDetector::from_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  RestorationNet net = restore_network(ck);
  return AnomalyDetector(ck.config, ck.stats, std::move(net));
}

FeatureMap AnomalyDetector::features(const ImageTensor& image) const {
  return stats_.normalize(
      aggregate(extract_features(image, backbone_), {config_.feature_size, config_.feature_size}));
}

AnomalyMap AnomalyDetector::detect(const ImageTensor& image) const {
  return detect(image, config_.inference);
}

AnomalyMap AnomalyDetector::detect(const ImageTensor& image, const InferenceConfig& inference) const {
  return detect_features(features(image), net_, inference, config_.loss,
                         {image.pixels.height(), image.pixels.width()});
}

void AnomalyDetector::save(const std::string& path, std::int64_t step) const {
  save_checkpoint(path, config_, stats_, net_, step);
}

FeatureMap aggregated_features(const Backbone& backbone, const std::string& image_path,
                               int image_size, int feature_size, const std::string& cache_dir) {
  if (cache_dir.empty()) {
    return aggregate(extract_features(load_image(image_path, image_size), backbone),
                     {feature_size, feature_size});
  }
  std::uint64_t key = fnv1a(read_file(image_path));
  const std::string tag = std::to_string(backbone.checksum()) + "/" + std::to_string(image_size) +
                          "/" + std::to_string(feature_size);
  key = fnv1a(tag, key);
  const fs::path file = fs::path(cache_dir) / (hex(key) + ".feat");
  if (fs::is_regular_file(file)) {
    const std::string data = read_file(file.string());
    int shape[3];
    if (data.size() >= sizeof(shape)) {
      std::memcpy(shape, data.data(), sizeof(shape));
      const Shape s{shape[0], shape[1], shape[2]};
      if (shape[1] == feature_size && shape[2] == feature_size && shape[0] > 0 &&
          data.size() == sizeof(shape) + shape_numel(s) * sizeof(double)) {
        std::vector<double> v(shape_numel(s));
        std::memcpy(v.data(), data.data() + sizeof(shape), v.size() * sizeof(double));
        return FeatureMap(s, std::move(v));
      }
    }
  }
  FeatureMap f = aggregate(extract_features(load_image(image_path, image_size), backbone),
                           {feature_size, feature_size});
  std::string out(reinterpret_cast<const char*>(f.shape().data()), 3 * sizeof(int));
  out.append(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(double));
  atomic_write_file(file.string(), out);
  return f;
}

AnomalyDetector fit_detector(const RunConfig& config, const DatasetIndex& index,
                             const FitOptions& options) {
  config.validate();
  check_unsupervised(index);
  const auto train = index.split(Split::kTrain);
  if (train.empty()) throw ArgumentError("fit: training split is empty");

  const Backbone backbone(config.backbone);
  const std::uint64_t checksum = backbone.checksum();
  std::vector<FeatureMap> raw;
  raw.reserve(train.size());
  for (const auto& item : train) {
    raw.push_back(aggregated_features(backbone, item.image_path, config.image_size,
                                      config.feature_size, config.cache_dir));
  }
  ChannelStats stats = ChannelStats::compute(raw);
  std::vector<FeatureMap> data;
  data.reserve(raw.size());
  for (const auto& f : raw) data.push_back(stats.normalize(f));
  raw.clear();

  AnomalyDetector detector(config, stats, RestorationNet(config.net, config.train.seed));
  FitCallbacks callbacks;
  callbacks.on_step = options.on_step;
  if (!options.checkpoint_dir.empty()) {
    callbacks.on_checkpoint = [&](const TrainState& state) {
      detector.save((fs::path(options.checkpoint_dir) / ("step_" + std::to_string(state.step) + ".ckpt")).string(),
                    state.step);
    };
  }
  const TrainState state = fit(data, detector.net(), config.train, config.loss, callbacks);
  if (detector.backbone().checksum() != checksum) {
    throw TrainingError("backbone weights changed during training");
  }
  if (!options.checkpoint_dir.empty()) {
    detector.save((fs::path(options.checkpoint_dir) / "final.ckpt").string(), state.step);
  }
  return detector;
}

Evaluation evaluate_detector(const AnomalyDetector& detector, const DatasetIndex& index,
                             const InferenceConfig& inference) {
  Evaluation ev;
  ev.items = index.split(Split::kTest);
  if (ev.items.empty()) throw ArgumentError("evaluate: test split is empty");
  const int size = detector.config().image_size;
  std::vector<Tensor> preds, truths;
  std::vector<std::string> types;
  for (const auto& item : ev.items) {
    AnomalyMap map = detector.detect(load_image(item.image_path, size), inference);
    preds.push_back(map.scores);
    truths.push_back(item.ground_truth ? load_mask(*item.ground_truth, size) : Tensor({size, size}));
    types.push_back(item.defect_type);
    ev.maps.push_back(std::move(map));
  }
  ev.report = best_f1_sweep(preds, truths, detector.config().num_thresholds);
  std::map<std::string, std::pair<std::vector<Tensor>, std::vector<Tensor>>> groups;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (types[i] == "good") continue;
    groups[types[i]].first.push_back(preds[i]);
    groups[types[i]].second.push_back(truths[i]);
  }
  for (const auto& [type, g] : groups) {
    ev.report.per_category[type] = best_f1_sweep(g.first, g.second, detector.config().num_thresholds);
  }
  return ev;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream s;
  s << "category,AUROC,MAE,ACC,F1,threshold\n";
  auto row = [&s](const std::string& name, const EvalReport& r) {
    s << name << ',' << fmt(r.auroc) << ',' << fmt(r.mae) << ',' << fmt(r.acc) << ',' << fmt(r.f1)
      << ',' << fmt(r.threshold) << '\n';
  };
  EvalReport mean;
  int finite_auroc = 0;
  for (const auto& [name, r] : report.per_category) {
    row(name, r);
    if (std::isfinite(r.auroc)) {
      mean.auroc += r.auroc;
      ++finite_auroc;
    }
    mean.mae += r.mae;
    mean.acc += r.acc;
    mean.f1 += r.f1;
    mean.threshold += r.threshold;
  }
  row("all", report);
  if (!report.per_category.empty()) {
    const double n = static_cast<double>(report.per_category.size());
    mean.auroc = finite_auroc ? mean.auroc / finite_auroc : std::numeric_limits<double>::quiet_NaN();
    mean.mae /= n;
    mean.acc /= n;
    mean.f1 /= n;
    mean.threshold /= n;
    row("mean", mean);
  } else {
    row("mean", report);
  }
  return s.str();
}

std::string report_json(const EvalReport& report) {
  json j;
  j["schema_version"] = 1;
  j["all"] = report_to_json(report);
  json cats = json::object();
  for (const auto& [name, r] : report.per_category) cats[name] = report_to_json(r);
  j["per_category"] = cats;
  return j.dump(2) + "\n";
}

std::string detection_record_json(const std::string& path, const AnomalyMap& map, std::uint64_t seed) {
  json j{{"path", path}, {"image_score", map.image_score}, {"k_values", map.k_values_used}, {"seed", seed}};
  return j.dump();
}

}  // namespace mfrnet
