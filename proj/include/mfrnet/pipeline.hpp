#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mfrnet/config.hpp"
#include "mfrnet/dataset.hpp"
#include "mfrnet/feature_aggregator.hpp"
#include "mfrnet/inference.hpp"
#include "mfrnet/metrics.hpp"
#include "mfrnet/restoration_net.hpp"
#include "mfrnet/trainer.hpp"

namespace mfrnet {

// Frozen backbone + feature statistics + restoration network.
class AnomalyDetector {
 public:
  AnomalyDetector(RunConfig config, ChannelStats stats, RestorationNet net);
  static AnomalyDetector from_checkpoint(const std::string& path);

  const RunConfig& config() const { return config_; }
  const Backbone& backbone() const { return backbone_; }
  const ChannelStats& stats() const { return stats_; }
  const RestorationNet& net() const { return net_; }
  RestorationNet& net() { return net_; }

  // Aggregated, channel-normalised features of one image.
  FeatureMap features(const ImageTensor& image) const;
  AnomalyMap detect(const ImageTensor& image) const;
  AnomalyMap detect(const ImageTensor& image, const InferenceConfig& inference) const;

  void save(const std::string& path, std::int64_t step = 0) const;

 private:
  RunConfig config_;
  Backbone backbone_;
  ChannelStats stats_;
  RestorationNet net_;
};

// Aggregated (unnormalised) features of an image, read from or written to
// `cache_dir` when it is non-empty.
FeatureMap aggregated_features(const Backbone& backbone, const std::string& image_path,
                               int image_size, int feature_size, const std::string& cache_dir);

struct FitOptions {
  std::function<void(const StepLog&)> on_step;
  // Where periodic checkpoints go; empty disables them.
  std::string checkpoint_dir;
};

// Trains one model on the index's training split. Aborts with IndexError if
// the split is not mask-free.
AnomalyDetector fit_detector(const RunConfig& config, const DatasetIndex& index,
                             const FitOptions& options = {});

struct Evaluation {
  EvalReport report;
  std::vector<DatasetItem> items;
  std::vector<AnomalyMap> maps;
};

// Scores every test item and evaluates pooled pixel metrics per defect type.
Evaluation evaluate_detector(const AnomalyDetector& detector, const DatasetIndex& index,
                             const InferenceConfig& inference);

// CSV: header, one row per category, then a "mean" row over categories.
std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);

// {path, image_score, k_values, seed}
std::string detection_record_json(const std::string& path, const AnomalyMap& map,
                                  std::uint64_t seed);

}  // namespace mfrnet
