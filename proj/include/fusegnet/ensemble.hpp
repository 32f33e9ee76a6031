#pragma once

// Inference: single-model prediction, probability-space ensemble averaging
// and binarization.

#include "fusegnet/network.hpp"
#include "fusegnet/trainer.hpp"

#include <opencv2/core.hpp>

#include <filesystem>
#include <memory>
#include <vector>

namespace fusegnet {

// Anything that maps an RGB image (CV_8UC3) to a probability map (CV_32FC1)
// of the same size.
class ProbabilityModel {
 public:
  virtual ~ProbabilityModel() = default;
  virtual cv::Mat predict(const cv::Mat& rgb) = 0;
};

// Standardizes, runs the network in evaluation mode without gradients and
// returns the sigmoid map. Throws ShapeError when H or W is not a multiple
// of 32.
cv::Mat predict(FUSegNet& model, const cv::Mat& rgb);

class NetworkModel : public ProbabilityModel {
 public:
  explicit NetworkModel(FUSegNet model) : model_(std::move(model)) {}
  cv::Mat predict(const cv::Mat& rgb) override { return fusegnet::predict(model_, rgb); }
  FUSegNet& network() { return model_; }

 private:
  FUSegNet model_;
};

using ModelList = std::vector<std::shared_ptr<ProbabilityModel>>;

// Pixelwise arithmetic mean of the members' maps (accumulated in double).
// Throws ContractError for an empty list, ShapeError on mismatched outputs.
cv::Mat ensemble_predict(const ModelList& members, const cv::Mat& rgb);

struct EnsembleBundle {
  std::vector<CheckpointRecord> checkpoints;
  NetworkConfig net_cfg;
};

// Reads every sidecar and checks that all networks are configured alike;
// throws ConfigError naming the first mismatching checkpoint.
EnsembleBundle load_bundle(const std::vector<std::filesystem::path>& checkpoint_paths);
ModelList load_models(const EnsembleBundle& bundle);

cv::Mat ensemble_predict(const EnsembleBundle& bundle, const cv::Mat& rgb);

// 1 where prob >= threshold, else 0 (CV_8UC1).
cv::Mat binarize(const cv::Mat& prob, double threshold = 0.5);

}  // namespace fusegnet
