#include "fusegnet/preprocess.hpp"

#include "fusegnet/error.hpp"

#include <cmath>
#include <cstring>

namespace fusegnet {

void validate(const NormalizationStats& stats) {
  for (std::size_t c = 0; c < 3; ++c) {
    if (!std::isfinite(stats.mean[c]) || !std::isfinite(stats.stddev[c]) ||
        stats.stddev[c] == 0.0) {
      throw DataError("normalization statistics are degenerate (zero or non-finite std)");
    }
  }
}

torch::Tensor standardize_image(const cv::Mat& rgb, const NormalizationStats& stats) {
  validate(stats);
  if (rgb.empty() || rgb.type() != CV_8UC3) throw DataError("image must be 8-bit RGB");
  cv::Mat contiguous = rgb.isContinuous() ? rgb : rgb.clone();
  auto hwc = torch::from_blob(contiguous.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  auto image = hwc.permute({2, 0, 1}).to(torch::kFloat64).div(255.0);
  auto mean = torch::tensor({stats.mean[0], stats.mean[1], stats.mean[2]}, torch::kFloat64)
                  .view({3, 1, 1});
  auto stddev = torch::tensor({stats.stddev[0], stats.stddev[1], stats.stddev[2]}, torch::kFloat64)
                    .view({3, 1, 1});
  return ((image - mean) / stddev).to(torch::kFloat32).contiguous();
}

torch::Tensor normalize_mask(const cv::Mat& mask) {
  if (mask.empty() || mask.type() != CV_8UC1) throw DataError("mask must be 8-bit single channel");
  cv::Mat contiguous = mask.isContinuous() ? mask : mask.clone();
  auto m = torch::from_blob(contiguous.data, {1, mask.rows, mask.cols}, torch::kUInt8);
  return (m > 0).to(torch::kFloat32).contiguous();
}

TensorSample preprocess(const SampleRecord& record, const NormalizationStats& stats) {
  validate(record);
  return TensorSample{standardize_image(record.image, stats), normalize_mask(record.mask)};
}

cv::Mat tensor_to_mat(const torch::Tensor& map) {
  auto t = map.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (t.dim() == 3 && t.size(0) == 1) t = t.squeeze(0);
  if (t.dim() != 2) throw ShapeError("expected a single-channel map");
  cv::Mat out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_32FC1);
  std::memcpy(out.data, t.data_ptr<float>(), static_cast<std::size_t>(t.numel()) * sizeof(float));
  return out;
}

}  // namespace fusegnet
