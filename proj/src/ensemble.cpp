#include "fusegnet/ensemble.hpp"

#include "fusegnet/error.hpp"
#include "fusegnet/preprocess.hpp"

namespace fusegnet {

cv::Mat predict(FUSegNet& model, const cv::Mat& rgb) {
  if (rgb.empty() || rgb.type() != CV_8UC3) throw DataError("prediction input must be 8-bit RGB");
  if (rgb.rows % 32 != 0 || rgb.cols % 32 != 0) {
    throw ShapeError("image size " + std::to_string(rgb.cols) + "x" + std::to_string(rgb.rows) +
                     " is not a multiple of 32");
  }
  const auto stats = encoder_normalization(model->config().encoder_name);
  model->eval();
  torch::NoGradGuard no_grad;
  auto out = model->forward(standardize_image(rgb, stats).unsqueeze(0));
  return tensor_to_mat(out[0]);
}

cv::Mat ensemble_predict(const ModelList& members, const cv::Mat& rgb) {
  if (members.empty()) throw ContractError("ensemble has no members");
  cv::Mat sum;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const cv::Mat prob = members[i]->predict(rgb);
    if (prob.type() != CV_32FC1) throw ShapeError("member output must be single-channel float");
    if (i == 0) {
      prob.convertTo(sum, CV_64F);
      continue;
    }
    if (prob.size() != sum.size()) {
      throw ShapeError("ensemble member " + std::to_string(i) + " produced a differently sized map");
    }
    cv::Mat p64;
    prob.convertTo(p64, CV_64F);
    sum += p64;
  }
  cv::Mat mean;
  sum.convertTo(mean, CV_32F, 1.0 / static_cast<double>(members.size()));
  return mean;
}

EnsembleBundle load_bundle(const std::vector<std::filesystem::path>& checkpoint_paths) {
  if (checkpoint_paths.empty()) throw ConfigError("at least one checkpoint is required");
  EnsembleBundle bundle;
  for (const auto& path : checkpoint_paths) {
    auto record = load_checkpoint_record(path);
    if (bundle.checkpoints.empty()) {
      bundle.net_cfg = record.network;
    } else if (!(record.network == bundle.net_cfg)) {
      throw ConfigError("checkpoint " + path.string() + " has a network configuration that differs from " +
                        checkpoint_paths.front().string());
    }
    bundle.checkpoints.push_back(std::move(record));
  }
  return bundle;
}

ModelList load_models(const EnsembleBundle& bundle) {
  ModelList models;
  for (const auto& record : bundle.checkpoints) {
    models.push_back(std::make_shared<NetworkModel>(load_checkpoint_model(record)));
  }
  return models;
}

cv::Mat ensemble_predict(const EnsembleBundle& bundle, const cv::Mat& rgb) {
  return ensemble_predict(load_models(bundle), rgb);
}

cv::Mat binarize(const cv::Mat& prob, double threshold) {
  if (prob.empty() || prob.channels() != 1) throw DataError("probability map must be single channel");
  cv::Mat p64;
  prob.convertTo(p64, CV_64F);
  cv::Mat mask = p64 >= threshold;  // 255 / 0
  return mask / 255;
}

}  // namespace fusegnet
