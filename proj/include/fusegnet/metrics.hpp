#pragma once

// Segmentation scores over binary masks (CV_8UC1, values {0, 1}).
// Data-based scores pool confusion counts over all images before forming the
// ratios; image-based scores average per-image ratios. A ratio whose
// denominator is zero scores 1.0.

#include <opencv2/core.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fusegnet {

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;

  int64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricTuple {
  double precision = 0.0;
  double recall = 0.0;
  double dsc = 0.0;
  double iou = 0.0;
};

// Throws ShapeError on size mismatch, DataError on non-binary input.
ConfusionCounts confusion_counts(const cv::Mat& pred, const cv::Mat& gt);

// Ratios for one set of counts.
MetricTuple scores(const ConfusionCounts& c);
// Throw ContractError on an empty list.
MetricTuple data_based_metrics(const std::vector<ConfusionCounts>& counts);
MetricTuple image_based_metrics(const std::vector<ConfusionCounts>& counts);

using BoundarySet = std::vector<cv::Point>;  // sorted row-major, unique

struct CannySettings {
  double sigma = 0.1;
  double low_ratio = 0.1;   // of the maximum gradient magnitude
  double high_ratio = 0.2;
};

// Canny edge map (CV_8UC1, 1 on edges) of a binary mask.
cv::Mat canny_edges(const cv::Mat& mask, const CannySettings& settings = {});
BoundarySet extract_boundary(const cv::Mat& mask, const CannySettings& settings = {});

// Exact squared Euclidean distance to the nearest nonzero pixel of `features`
// (CV_64FC1). Pixels are +inf when there are no features.
cv::Mat squared_distance_transform(const cv::Mat& features);

constexpr double kPfomSentinel = 2.0;

// Pratt's figure of merit, summed over predicted boundary points. Returns
// kPfomSentinel when either set is empty.
double pfom(const BoundarySet& gt_boundary, const BoundarySet& pred_boundary,
            double beta = 1.0 / 9.0);
double pfom(const cv::Mat& pred, const cv::Mat& gt, double beta = 1.0 / 9.0,
            const CannySettings& settings = {});

struct CategorySpec {
  // Percent-area edges between the non-empty bins. Category 1 is an empty
  // ground truth; category 2 is (0, t[0]); category i is [t[i-3], t[i-2]);
  // the last category is [t.back(), 100].
  std::vector<double> thresholds{0.15, 0.3, 0.6, 1.2, 2.5, 5.0, 10.0, 20.0};

  int category_count() const { return static_cast<int>(thresholds.size()) + 2; }
  // Human-readable interval for a category, e.g. "[0.3, 0.6)".
  std::string label(int category) const;
};

// Throws ConfigError unless there are 8 strictly ascending edges in (0, 100).
void validate(const CategorySpec& spec);

double gt_area_percent(const cv::Mat& gt);
int categorize(const cv::Mat& gt, const CategorySpec& spec = {});
int categorize_percent(double percent, const CategorySpec& spec = {});

int64_t category1_fp_count(const cv::Mat& pred);

}  // namespace fusegnet
