#pragma once

// Training-time augmentation. A plan holds an overall gate and four sets;
// each set fires independently with its own probability and applies one of
// its transforms (chosen uniformly, then gated by the transform's own p).
// Geometric transforms move image and mask together (mask resampled with
// nearest neighbour); photometric transforms touch the image only.

#include "fusegnet/dataio.hpp"

#include <opencv2/core.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fusegnet {

enum class TransformKind {
  HorizontalFlip,
  VerticalFlip,
  Scale,
  Rotate,
  Shift,
  ShiftScaleRotate,  // "combine all"
  Perspective,
  GaussianNoise,
  Sharpen,
  Blur,
  MotionBlur,
  Clahe,
  BrightnessContrast,
  Gamma,
  HueSaturation,
};

std::string to_string(TransformKind kind);
TransformKind transform_from_string(const std::string& name);
bool is_geometric(TransformKind kind);
// Parameter names and default values accepted by a transform.
std::map<std::string, double> default_params(TransformKind kind);

struct TransformSpec {
  TransformKind kind = TransformKind::HorizontalFlip;
  double p = 1.0;
  std::map<std::string, double> params;  // missing keys take default_params()

  double param(const std::string& name) const;
};

struct AugmentationSet {
  double p = 1.0;
  std::vector<TransformSpec> transforms;
};

struct AugmentationPlan {
  double overall_p = 0.9;
  std::vector<AugmentationSet> sets;

  // The four-set training recipe (flips / affine / blur-noise / colour).
  static AugmentationPlan standard();
  // A plan that never alters its input.
  static AugmentationPlan none();
};

// Throws ConfigError naming the first invalid probability or parameter.
void validate(const AugmentationPlan& plan);

struct AppliedTransform {
  TransformKind kind = TransformKind::HorizontalFlip;
  // Geometric only: flips store the cv::flip code, warps a 3x3 homography.
  int flip_code = 0;
  cv::Matx33d homography = cv::Matx33d::eye();
};

struct AugmentationTrace {
  bool gate_passed = false;
  std::vector<AppliedTransform> applied;

  bool identity() const { return applied.empty(); }
  std::size_t geometric_count() const;
};

// Deterministic in (record, plan, seed).
SampleRecord augment(const SampleRecord& record, const AugmentationPlan& plan, uint64_t seed,
                     AugmentationTrace* trace = nullptr);

// Re-applies the geometric part of a trace to a mask.
cv::Mat replay_geometry(const cv::Mat& mask, const AugmentationTrace& trace);

// Applies one geometric transform; nearest-neighbour resampling when
// `nearest` is set (masks), bilinear otherwise. Borders fill with 0.
cv::Mat apply_geometry(const cv::Mat& input, const AppliedTransform& op, bool nearest);

// Per-sample seed from (global seed, sample id, epoch).
uint64_t derive_seed(uint64_t global_seed, const std::string& sample_id, uint64_t epoch);

}  // namespace fusegnet
