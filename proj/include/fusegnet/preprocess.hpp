#pragma once

// Conversion between OpenCV samples and network tensors.

#include "fusegnet/dataio.hpp"
#include "fusegnet/encoder.hpp"

#include <torch/torch.h>

#include <opencv2/core.hpp>

namespace fusegnet {

// Throws DataError when a standard deviation is zero or not finite.
void validate(const NormalizationStats& stats);

// RGB CV_8UC3 -> float [3, H, W], scaled to [0, 1] then (x - mean) / std per
// channel.
torch::Tensor standardize_image(const cv::Mat& rgb, const NormalizationStats& stats);
// {0, 1} or {0, 255} CV_8UC1 -> float [1, H, W] with values {0.0, 1.0}.
torch::Tensor normalize_mask(const cv::Mat& mask);

struct TensorSample {
  torch::Tensor image;  // [3, H, W]
  torch::Tensor mask;   // [1, H, W]
};

TensorSample preprocess(const SampleRecord& record, const NormalizationStats& stats);

// Single-channel float tensor [H, W] (or [1, H, W]) -> CV_32FC1.
cv::Mat tensor_to_mat(const torch::Tensor& map);

}  // namespace fusegnet
