#pragma once

// Evaluation report: per-image rows, global and per-category aggregates,
// CSV persistence and the SVG plot suite.

#include "fusegnet/metrics.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fusegnet {

struct ImageResult {
  std::string id;
  ConfusionCounts counts;
  MetricTuple scores;  // image-level ratios
  double pfom = kPfomSentinel;
  int category = 1;
};

struct CategoryResult {
  std::size_t images = 0;
  MetricTuple data_based;
  MetricTuple image_based;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> dsc;
  std::vector<double> iou;
  std::vector<double> pfom;  // may contain sentinel entries
  // Mean over non-sentinel PFOM values; the sentinel when there are none.
  double pfom_mean = kPfomSentinel;
};

struct MetricsReport {
  CategorySpec spec;
  std::vector<ImageResult> images;
  MetricTuple data_based;
  MetricTuple image_based;
  std::map<int, CategoryResult> per_category;  // only categories that occur
  std::vector<int64_t> category1_fp_counts;
  double pfom_mean = kPfomSentinel;  // over non-sentinel entries
};

double mean_excluding_sentinel(const std::vector<double>& values);

// ids, preds and gts are aligned. Throws ContractError on empty or unequal
// inputs.
MetricsReport build_report(const std::vector<std::string>& ids, const std::vector<cv::Mat>& preds,
                           const std::vector<cv::Mat>& gts, const CategorySpec& spec = {});

// Recomputes every aggregate from stored per-image rows.
MetricsReport build_report(std::vector<ImageResult> images, const CategorySpec& spec = {});

// Columns: id,tp,fp,tn,fn,precision,recall,dsc,iou,pfom,category
void write_per_image_csv(const MetricsReport& report, const std::filesystem::path& path);
// Columns: family,category,label,images,precision,recall,dsc,iou,pfom
// family is "data" or "image"; category is "all" or the category index.
void write_aggregate_csv(const MetricsReport& report, const std::filesystem::path& path);
// Throws DataError naming the row and column of the first malformed cell.
std::vector<ImageResult> read_per_image_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  MetricsReport report;
};

// Writes the single-run plots into `dir`:
//   image_metrics_boxplot.svg, category_dsc_pie.svg, category1_fp_boxplot.svg
// and returns their paths.
std::vector<std::filesystem::path> write_report_plots(const MetricsReport& report,
                                                      const std::filesystem::path& dir);
// Per-category data-based DSC and mean PFOM, one line per series:
// category_comparison.svg.
std::filesystem::path write_comparison_plot(const std::vector<PlotSeries>& series,
                                            const std::filesystem::path& dir);

struct BoxStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;
};

// Linear-interpolated quartiles; whiskers reach the furthest values within
// 1.5 IQR of the box. Throws ContractError on empty input.
BoxStats box_stats(std::vector<double> values);

}  // namespace fusegnet
